#include "fedgrid/convergence_lab.hpp"

#include <cmath>
#include <stdexcept>

#include "fedgrid/rng.hpp"

namespace fedgrid {

double QuadraticObjective::value(const Eigen::VectorXd& w) const {
  return 0.5 * w.dot(A * w) + b.dot(w);
}

Eigen::VectorXd QuadraticObjective::gradient(const Eigen::VectorXd& w) const {
  return A * w + b;
}

Eigen::VectorXd QuadraticObjective::minimizer() const { return A.ldlt().solve(-b); }

double QuadraticObjective::min_value() const { return value(minimizer()); }

QuadraticObjective make_objective(int dim, double mu, double L, std::uint64_t seed) {
  if (!(mu > 0.0)) throw std::invalid_argument("make_objective: mu must be positive");
  if (mu > L) throw std::invalid_argument("make_objective: mu must not exceed L");
  if (dim < 1) throw std::invalid_argument("make_objective: dim must be >= 1");

  Rng rng(seed);
  Eigen::VectorXd eigs(dim);
  eigs(0) = mu;
  if (dim > 1) eigs(dim - 1) = L;
  for (int i = 1; i + 1 < dim; ++i) eigs(i) = rng.uniform(mu, L);

  QuadraticObjective obj;
  obj.mu = mu;
  obj.L = L;
  obj.b = Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return rng.normal(); });

  if (dim == 1) {
    obj.A = Eigen::MatrixXd::Constant(1, 1, mu);
    return obj;
  }

  Eigen::MatrixXd G =
      Eigen::MatrixXd::NullaryExpr(dim, dim, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ();
  obj.A = Q * eigs.asDiagonal() * Q.transpose();
  obj.A = 0.5 * (obj.A + obj.A.transpose());  // kill asymmetry from rounding
  return obj;
}

Theorem1Report check_theorem1(const QuadraticObjective& obj, const Eigen::VectorXd& w0,
                              int k_max) {
  if (k_max < 1) throw std::invalid_argument("check_theorem1: k_max must be >= 1");

  Theorem1Report report;
  double f_star = obj.min_value();
  Eigen::VectorXd w_star = obj.minimizer();
  double eta = 1.0 / obj.L;
  double rate = 1.0 - obj.mu / obj.L;

  Eigen::VectorXd w = w0;
  double gap0 = obj.value(w0) - f_star;
  report.gaps.push_back(gap0);
  report.lemma3_ok = true;
  report.descent_ok = true;
  report.max_ratio = 0.0;

  // Slack for comparisons near machine precision (the mu = L case drives the
  // bound to exactly zero while rounding leaves ~1e-16-scale residue).
  double abs_slack = 1e-12 * std::max(1.0, std::abs(gap0));
  double bound = gap0;
  bool pass = true;

  auto check_lemma3 = [&](const Eigen::VectorXd& wk) {
    double gap = obj.value(wk) - f_star;
    double grad_sq = obj.gradient(wk).squaredNorm();
    double dist_sq = (wk - w_star).squaredNorm();
    double left = grad_sq / (2.0 * obj.mu);
    double right = 0.5 * obj.mu * dist_sq;
    double slack_l = 1e-9 * std::max(1.0, std::abs(left));
    double slack_r = 1e-9 * std::max(1.0, std::abs(gap));
    if (gap > left + slack_l || right > gap + slack_r) report.lemma3_ok = false;
  };

  check_lemma3(w);
  for (int k = 1; k <= k_max; ++k) {
    Eigen::VectorXd grad = obj.gradient(w);
    double f_before = obj.value(w);
    Eigen::VectorXd w_next = w - eta * grad;
    if (!w_next.allFinite()) throw std::runtime_error("check_theorem1: non-finite iterate");

    double f_after = obj.value(w_next);
    double descent_slack = 1e-9 * std::max(1.0, std::abs(f_before));
    if (f_after > f_before - grad.squaredNorm() / (2.0 * obj.L) + descent_slack) {
      report.descent_ok = false;
    }

    w = std::move(w_next);
    check_lemma3(w);
    double gap = f_after - f_star;
    report.gaps.push_back(gap);

    bound *= rate;
    if (bound > 0.0) {
      report.max_ratio = std::max(report.max_ratio, gap / bound);
    }
    if (gap > bound * (1.0 + 1e-9) + abs_slack) pass = false;

    if (report.iterations_to_eps < 0 && gap <= report.eps_opt) report.iterations_to_eps = k;
  }

  report.iteration_bound =
      gap0 > report.eps_opt ? (obj.L / obj.mu) * std::log(gap0 / report.eps_opt) : 0.0;
  report.pass = pass && report.lemma3_ok && report.descent_ok;
  return report;
}

FedConsistencyReport check_federated_consistency(std::span<const QuadraticObjective> objectives,
                                                 std::span<const double> weights,
                                                 const Eigen::VectorXd& w0, double eta,
                                                 int local_steps) {
  if (objectives.empty()) throw std::invalid_argument("no objectives");
  if (objectives.size() != weights.size()) {
    throw std::invalid_argument("one weight per objective required");
  }
  Eigen::Index dim = w0.size();
  for (const auto& obj : objectives) {
    if (obj.A.rows() != dim) throw std::invalid_argument("objective dimension mismatch");
  }

  // Weighted-average objective: F_bar = sum_j p_j F_j, itself a quadratic.
  QuadraticObjective mixture;
  mixture.A = Eigen::MatrixXd::Zero(dim, dim);
  mixture.b = Eigen::VectorXd::Zero(dim);
  for (std::size_t j = 0; j < objectives.size(); ++j) {
    mixture.A += weights[j] * objectives[j].A;
    mixture.b += weights[j] * objectives[j].b;
  }

  auto fedavg_round = [&](int steps) {
    Eigen::VectorXd averaged = Eigen::VectorXd::Zero(dim);
    for (std::size_t j = 0; j < objectives.size(); ++j) {
      Eigen::VectorXd w = w0;
      for (int s = 0; s < steps; ++s) w -= eta * objectives[j].gradient(w);
      averaged += weights[j] * w;
    }
    return averaged;
  };
  auto central = [&](int steps) {
    Eigen::VectorXd w = w0;
    for (int s = 0; s < steps; ++s) w -= eta * mixture.gradient(w);
    return w;
  };

  FedConsistencyReport report;
  report.single_step_residual = (fedavg_round(1) - central(1)).norm();
  if (local_steps > 1) {
    report.multi_step_drift = (fedavg_round(local_steps) - central(local_steps)).norm();
  }
  return report;
}

}  // namespace fedgrid
