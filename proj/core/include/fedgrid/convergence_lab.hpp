#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace fedgrid {

// F(w) = 0.5 w'Aw + b'w with A symmetric positive definite, eigenvalues in
// [mu, L]. Strong convexity and smoothness constants are exact by
// construction, so rate bounds can be checked without estimation.
struct QuadraticObjective {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double mu = 0.0;
  double L = 0.0;

  double value(const Eigen::VectorXd& w) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const;
  Eigen::VectorXd minimizer() const;  // -A^{ -1} b
  double min_value() const;
};

// A = Q diag(eigs) Q' with a seeded random orthogonal Q; the eigenvalue set
// always contains both endpoints mu and L. Throws on mu > L or mu <= 0.
QuadraticObjective make_objective(int dim, double mu, double L, std::uint64_t seed);

struct Theorem1Report {
  bool pass = false;
  double max_ratio = 0.0;      // worst (F(w_k)-F*) / ((1-mu/L)^k (F(w_0)-F*))
  bool lemma3_ok = false;      // gradient/value/distance sandwich at every iterate
  bool descent_ok = false;     // F(w_{k+1}) <= F(w_k) - ||grad||^2/(2L)
  int iterations_to_eps = -1;  // first k with gap <= eps_opt (-1 if never)
  double iteration_bound = 0.0;  // (L/mu) * ln(gap0 / eps_opt)
  double eps_opt = 1e-6;
  std::vector<double> gaps;    // F(w_k) - F*, k = 0..k_max
};

// Runs gradient descent with step 1/L from w0 and checks the linear
// convergence bound gap_k <= (1-mu/L)^k * gap_0 (ratio tolerance 1e-9, plus
// a tiny absolute slack for the mu == L case where the bound is exactly 0),
// the value/gradient/distance sandwich, and the per-step descent inequality.
Theorem1Report check_theorem1(const QuadraticObjective& obj, const Eigen::VectorXd& w0,
                              int k_max);

struct FedConsistencyReport {
  double single_step_residual = 0.0;  // FedAvg-of-steps vs step-on-average objective
  double multi_step_drift = 0.0;      // informational: heterogeneous clients, >1 local step
};

// One FedAvg round on quadratics: every client takes local gradient steps of
// size eta from the shared point, then the iterates are averaged. With a
// single local step this must equal one step on the weighted-average
// objective; the residual of that identity is returned. The multi-step drift
// is reported but intentionally not bounded (it is nonzero for heterogeneous
// clients).
FedConsistencyReport check_federated_consistency(std::span<const QuadraticObjective> objectives,
                                                 std::span<const double> weights,
                                                 const Eigen::VectorXd& w0, double eta,
                                                 int local_steps = 1);

}  // namespace fedgrid
