#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sssd/errors.hpp"
#include "sssd/tensor.hpp"

namespace sssd::s4 {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// HiPPO-LegS state matrix: A[n,k] = -sqrt(2n+1) sqrt(2k+1) below the
/// diagonal, -(n+1) on it, 0 above.
template <typename Scalar = double>
Matrix<Scalar> hippo_legs(Index n) {
  if (n < 1) throw DomainError("hippo_legs: state dimension must be >= 1");
  Matrix<Scalar> a = Matrix<Scalar>::Zero(n, n);
  for (Index row = 0; row < n; ++row) {
    for (Index col = 0; col < row; ++col) {
      using std::sqrt;
      a(row, col) = -sqrt(Scalar(2 * row + 1)) * sqrt(Scalar(2 * col + 1));
    }
    a(row, row) = -Scalar(row + 1);
  }
  return a;
}

// Companion input vector of HiPPO-LegS, B[n] = sqrt(2n+1).
template <typename Scalar = double>
Vector<Scalar> hippo_legs_input(Index n) {
  if (n < 1) throw DomainError("hippo_legs_input: state dimension must be >= 1");
  Vector<Scalar> b(n);
  for (Index i = 0; i < n; ++i) {
    using std::sqrt;
    b[i] = sqrt(Scalar(2 * i + 1));
  }
  return b;
}

template <typename Scalar = double>
struct ContinuousSsm {
  Matrix<Scalar> a;
  Vector<Scalar> b;
  RowVector<Scalar> c;
  Scalar d = Scalar(0);
};

template <typename Scalar = double>
struct DiscreteSsm {
  Matrix<Scalar> a_bar;
  Vector<Scalar> b_bar;
  RowVector<Scalar> c_bar;
};

/// Bilinear (Tustin) discretization with step `delta`:
///   A_bar = (I - delta/2 A)^-1 (I + delta/2 A), B_bar = (I - delta/2 A)^-1 delta B.
template <typename Scalar>
DiscreteSsm<Scalar> discretize_bilinear(const ContinuousSsm<Scalar>& ssm, Scalar delta) {
  if (!(delta > Scalar(0))) throw DomainError("discretize_bilinear: step size must be positive");
  const Index n = ssm.a.rows();
  if (ssm.a.cols() != n || ssm.b.size() != n || ssm.c.size() != n) {
    throw DimensionError("discretize_bilinear: A, B, C dimensions disagree");
  }
  const Matrix<Scalar> eye = Matrix<Scalar>::Identity(n, n);
  const Matrix<Scalar> half = (delta / Scalar(2)) * ssm.a;
  const Eigen::PartialPivLU<Matrix<Scalar>> lu(eye - half);
  const Scalar rcond = lu.rcond();
  using std::abs;
  if (!(rcond > Scalar(64) * Eigen::NumTraits<Scalar>::epsilon())) {
    throw NumericError("discretize_bilinear: (I - delta/2 A) is singular (rcond estimate " +
                       std::to_string(static_cast<double>(rcond)) + ")");
  }
  DiscreteSsm<Scalar> out;
  out.a_bar = lu.solve(eye + half);
  out.b_bar = lu.solve(delta * ssm.b);
  out.c_bar = ssm.c;
  return out;
}

/// Kernel k[i] = C_bar A_bar^i B_bar for i < length, by state propagation.
template <typename Scalar>
Vector<Scalar> materialize_kernel(const DiscreteSsm<Scalar>& d, Index length) {
  if (length < 1) throw DomainError("materialize_kernel: length must be >= 1");
  Vector<Scalar> k(length);
  Vector<Scalar> state = d.b_bar;
  Vector<Scalar> next(state.size());
  for (Index i = 0; i < length; ++i) {
    k[i] = d.c_bar.dot(state);
    if (i + 1 < length) {
      next.noalias() = d.a_bar * state;
      state.swap(next);
    }
  }
  return k;
}

/// Exact recurrence x_k = A_bar x_{k-1} + B_bar u_k, y_k = C_bar x_k + D u_k, x_{-1} = 0.
template <typename Scalar>
Vector<Scalar> apply_recurrent(const DiscreteSsm<Scalar>& d, std::span<const Scalar> u, Scalar feedthrough) {
  const Index n = d.a_bar.rows();
  Vector<Scalar> state = Vector<Scalar>::Zero(n);
  Vector<Scalar> next(n);
  Vector<Scalar> y(static_cast<Index>(u.size()));
  for (std::size_t k = 0; k < u.size(); ++k) {
    next.noalias() = d.a_bar * state;
    next += d.b_bar * u[k];
    state.swap(next);
    y[static_cast<Index>(k)] = d.c_bar.dot(state) + feedthrough * u[k];
  }
  return y;
}

// y = k * u (causal, linear) + D u, via real FFT on zero-padded length next_pow2(2L).
Eigen::VectorXd apply_convolutional(std::span<const double> kernel, std::span<const double> u, double feedthrough);

}  // namespace sssd::s4
