#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <variant>

#include "fsqkd/rng.hpp"

namespace fsqkd {

using Complex = std::complex<double>;

// Equality / unitarity tolerance for the pure linear-algebra layer.
inline constexpr double kMatrixTol = 1e-12;

/// Two-component field amplitude in the H/V basis.
struct JonesVector {
  Complex h{0.0, 0.0};
  Complex v{0.0, 0.0};

  double squared_norm() const { return std::norm(h) + std::norm(v); }

  bool finite() const {
    return std::isfinite(h.real()) && std::isfinite(h.imag()) &&
           std::isfinite(v.real()) && std::isfinite(v.imag());
  }

  JonesVector operator*(Complex s) const { return {h * s, v * s}; }
  JonesVector operator+(const JonesVector& o) const { return {h + o.h, v + o.v}; }
  JonesVector operator-(const JonesVector& o) const { return {h - o.h, v - o.v}; }

  static JonesVector horizontal() { return {{1.0, 0.0}, {0.0, 0.0}}; }
  static JonesVector vertical() { return {{0.0, 0.0}, {1.0, 0.0}}; }
};

// Hermitian inner product <a|b>, first argument conjugated. This is the
// pairing that governs interference of co-propagating fields.
inline Complex inner_product(const JonesVector& a, const JonesVector& b) {
  return std::conj(a.h) * b.h + std::conj(a.v) * b.v;
}

// Complex-bilinear pairing a.b (no conjugation), the natural pairing between
// counter-propagating modes. The Faraday-mirror orthogonality statement
// "every input maps to the orthogonal polarization" is exact under this form.
inline Complex bilinear_pairing(const JonesVector& a, const JonesVector& b) {
  return a.h * b.h + a.v * b.v;
}

enum class Reciprocity { Reciprocal, NonReciprocal };

/// 2x2 complex transfer matrix [[m00, m01], [m10, m11]] with a reciprocity
/// tag. For a reciprocal element the backward-propagation matrix is the
/// transpose of the forward one; a Faraday rotation is the same both ways.
struct JonesMatrix {
  Complex m00{1.0, 0.0}, m01{0.0, 0.0};
  Complex m10{0.0, 0.0}, m11{1.0, 0.0};
  Reciprocity reciprocity = Reciprocity::Reciprocal;

  JonesVector operator*(const JonesVector& j) const {
    return {m00 * j.h + m01 * j.v, m10 * j.h + m11 * j.v};
  }

  JonesMatrix operator*(const JonesMatrix& o) const {
    JonesMatrix r;
    r.m00 = m00 * o.m00 + m01 * o.m10;
    r.m01 = m00 * o.m01 + m01 * o.m11;
    r.m10 = m10 * o.m00 + m11 * o.m10;
    r.m11 = m10 * o.m01 + m11 * o.m11;
    r.reciprocity = (reciprocity == Reciprocity::Reciprocal &&
                     o.reciprocity == Reciprocity::Reciprocal)
                        ? Reciprocity::Reciprocal
                        : Reciprocity::NonReciprocal;
    return r;
  }

  JonesMatrix operator*(Complex s) const {
    JonesMatrix r = *this;
    r.m00 *= s;
    r.m01 *= s;
    r.m10 *= s;
    r.m11 *= s;
    return r;
  }

  JonesMatrix operator+(const JonesMatrix& o) const {
    JonesMatrix r = *this;
    r.m00 += o.m00;
    r.m01 += o.m01;
    r.m10 += o.m10;
    r.m11 += o.m11;
    r.reciprocity = (reciprocity == Reciprocity::Reciprocal &&
                     o.reciprocity == Reciprocity::Reciprocal)
                        ? Reciprocity::Reciprocal
                        : Reciprocity::NonReciprocal;
    return r;
  }

  JonesMatrix transpose() const {
    JonesMatrix r = *this;
    std::swap(r.m01, r.m10);
    return r;
  }

  JonesMatrix adjoint() const {
    JonesMatrix r;
    r.m00 = std::conj(m00);
    r.m01 = std::conj(m10);
    r.m10 = std::conj(m01);
    r.m11 = std::conj(m11);
    r.reciprocity = reciprocity;
    return r;
  }

  Complex determinant() const { return m00 * m11 - m01 * m10; }

  bool finite() const {
    auto ok = [](Complex c) {
      return std::isfinite(c.real()) && std::isfinite(c.imag());
    };
    return ok(m00) && ok(m01) && ok(m10) && ok(m11);
  }

  bool is_unitary(double tol = kMatrixTol) const {
    const JonesMatrix g = adjoint() * (*this);
    return std::abs(g.m00 - Complex{1.0, 0.0}) < tol &&
           std::abs(g.m11 - Complex{1.0, 0.0}) < tol &&
           std::abs(g.m01) < tol && std::abs(g.m10) < tol;
  }

  static JonesMatrix identity() { return {}; }

  static JonesMatrix diagonal(Complex d0, Complex d1) {
    JonesMatrix m;
    m.m00 = d0;
    m.m11 = d1;
    return m;
  }

  // Counter-clockwise rotation of the polarization plane:
  // H(1,0) -> (cos t, sin t).
  static JonesMatrix rotation(double theta,
                              Reciprocity rec = Reciprocity::Reciprocal) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    JonesMatrix m;
    m.m00 = {c, 0.0};
    m.m01 = {-s, 0.0};
    m.m10 = {s, 0.0};
    m.m11 = {c, 0.0};
    m.reciprocity = rec;
    return m;
  }
};

// Largest entrywise modulus of the difference between two matrices.
inline double max_entry_deviation(const JonesMatrix& a, const JonesMatrix& b) {
  return std::max(std::max(std::abs(a.m00 - b.m00), std::abs(a.m01 - b.m01)),
                  std::max(std::abs(a.m10 - b.m10), std::abs(a.m11 - b.m11)));
}

inline double max_entry_deviation(const JonesVector& a, const JonesVector& b) {
  return std::max(std::abs(a.h - b.h), std::abs(a.v - b.v));
}

// ---------------------------------------------------------------------------
// Optical elements

enum class Direction { Forward, Backward };
enum class ModulatedAxis { H, V };

struct FiberBirefringence {
  JonesMatrix matrix;  // must be tagged reciprocal
};

struct FaradayRotator {
  double angle_rad = 0.0;
};

struct PhaseModulator {
  double phase_rad = 0.0;
  ModulatedAxis axis = ModulatedAxis::V;
};

struct Mirror {};

struct Attenuator {
  double loss_db = 0.0;
};

using OpticalElement = std::variant<FiberBirefringence, FaradayRotator,
                                    PhaseModulator, Mirror, Attenuator>;

/// Transfer matrix of an element for a given propagation direction.
/// Reciprocal elements obey backward = transpose(forward); the Faraday
/// rotator applies the same rotation in both directions.
inline JonesMatrix element_matrix(const OpticalElement& element,
                                  Direction direction) {
  struct Visitor {
    Direction dir;

    JonesMatrix operator()(const FiberBirefringence& f) const {
      if (f.matrix.reciprocity != Reciprocity::Reciprocal) {
        throw std::invalid_argument(
            "fiber birefringence must be a reciprocal matrix");
      }
      return dir == Direction::Forward ? f.matrix : f.matrix.transpose();
    }

    JonesMatrix operator()(const FaradayRotator& fr) const {
      // Non-reciprocal: identical rotation regardless of direction.
      return JonesMatrix::rotation(fr.angle_rad, Reciprocity::NonReciprocal);
    }

    JonesMatrix operator()(const PhaseModulator& pm) const {
      const Complex phase = std::polar(1.0, pm.phase_rad);
      // Diagonal, hence equal to its own transpose in either direction.
      return pm.axis == ModulatedAxis::V
                 ? JonesMatrix::diagonal({1.0, 0.0}, phase)
                 : JonesMatrix::diagonal(phase, {1.0, 0.0});
    }

    JonesMatrix operator()(const Mirror&) const {
      // Fixed lab frame: reflection carries no coordinate flip; direction
      // semantics live entirely in the forward/backward rule.
      return JonesMatrix::identity();
    }

    JonesMatrix operator()(const Attenuator& att) const {
      if (att.loss_db < 0.0) {
        throw std::invalid_argument("attenuator loss must be >= 0 dB");
      }
      const double g = std::pow(10.0, -att.loss_db / 20.0);
      return JonesMatrix::diagonal({g, 0.0}, {g, 0.0});
    }
  };
  return std::visit(Visitor{direction}, element);
}

/// Ideal Faraday mirror (45 deg rotator + mirror + 45 deg rotator), fixed to
/// the antisymmetric convention [[0,1],[-1,0]]. Maps every polarization to
/// its orthogonal one: bilinear_pairing(FM*j, j) == 0 for all j.
inline JonesMatrix faraday_mirror_matrix() {
  JonesMatrix m;
  m.m00 = {0.0, 0.0};
  m.m01 = {1.0, 0.0};
  m.m10 = {-1.0, 0.0};
  m.m11 = {0.0, 0.0};
  m.reciprocity = Reciprocity::NonReciprocal;
  return m;
}

/// Faraday mirror with a rotator angle error (45 deg + err per pass).
inline JonesMatrix faraday_mirror_matrix(double fr_angle_error_rad) {
  if (fr_angle_error_rad == 0.0) return faraday_mirror_matrix();
  return JonesMatrix::rotation(2.0 * fr_angle_error_rad,
                               Reciprocity::NonReciprocal) *
         faraday_mirror_matrix();
}

/// Round trip through a reciprocal section terminated by a Faraday mirror:
/// B^T * FM * B. By the antisymmetric-matrix identity this equals
/// det(B) * FM exactly, so any reciprocal birefringence collapses to a
/// global phase (times |det| for non-unitary B).
inline JonesMatrix faraday_roundtrip(const JonesMatrix& birefringence) {
  if (birefringence.reciprocity != Reciprocity::Reciprocal) {
    throw std::invalid_argument(
        "faraday_roundtrip requires a reciprocal birefringence matrix");
  }
  return birefringence.transpose() * faraday_mirror_matrix() * birefringence;
}

namespace detail {

// Unit quaternion sampled uniformly on S^3 (Haar measure on SU(2)).
template <class Rng>
std::array<double, 4> haar_quaternion(Rng& rng) {
  auto gaussian_pair = [&rng](double& a, double& b) {
    const double u1 = 1.0 - rng.uniform01();
    const double u2 = rng.uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    a = r * std::cos(2.0 * std::numbers::pi * u2);
    b = r * std::sin(2.0 * std::numbers::pi * u2);
  };
  for (;;) {
    std::array<double, 4> q{};
    gaussian_pair(q[0], q[1]);
    gaussian_pair(q[2], q[3]);
    const double n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if (n2 < 1e-30) continue;  // astronomically unlikely; redraw
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : q) x *= inv;
    return q;
  }
}

inline JonesMatrix su2_from_quaternion(const std::array<double, 4>& q) {
  JonesMatrix m;
  m.m00 = {q[0], q[1]};
  m.m01 = {q[2], q[3]};
  m.m10 = {-q[2], q[3]};
  m.m11 = {q[0], -q[1]};
  m.reciprocity = Reciprocity::Reciprocal;
  return m;
}

}  // namespace detail

/// Haar-uniform SU(2) sample (unitary, det = 1). Tagged reciprocal since it
/// is used to model fiber birefringence and channel unitaries.
inline JonesMatrix random_su2(RngStream& rng) {
  return detail::su2_from_quaternion(detail::haar_quaternion(rng));
}

/// Random fully-polarized state, uniform on the Poincare sphere.
inline JonesVector random_polarization(RngStream& rng) {
  return random_su2(rng) * JonesVector::horizontal();
}

}  // namespace fsqkd
