#include "fusion/beta.hpp"

#include <cmath>
#include <memory>

#include "fusion/parallel.hpp"

namespace fusion {

namespace {

// Moment equations for one tilt block.
class MomentProblem {
 public:
  MomentProblem(const FittedNuisance& nu, int j, int s) : in_(nu.at(j)) {
    p_ = in_.pos[s];
    const WeightSpec& spec = *in_.spec[p_];
    c_ = spec.dim();
    lhs_ = Eigen::VectorXd::Zero(c_);
    std::vector<int> src = nu.data.rows_in({s});
    for (int i : src)
      for (int m = 0; m < c_; ++m) lhs_[m] += spec.basis[m].eval(nu.data.row(i));
    lhs_ /= static_cast<double>(src.size());

    const auto& rows = in_.law.rows;
    const long nA = static_cast<long>(rows.size());
    const int q = j - 1;
    RowMatrix X(nA, q);
    for (long a = 0; a < nA; ++a)
      for (int c = 0; c < q; ++c) X(a, c) = nu.data.z(rows[a], c);
    grid_ = std::make_unique<QueryGrid>(X, in_.law.smoother.discrete(), nu.options.grid_points);
    const int G = grid_->size();
    idx_.resize(G);
    omega_.resize(G);
    mono_.resize(G, c_);
    for (int g = 0; g < G; ++g) {
      in_.law.weights(grid_->point(g), idx_[g], omega_[g]);
      for (int m = 0; m < c_; ++m) mono_(g, m) = spec.basis[m].mono(grid_->point(g));
    }
    rho_.resize(nA);
    t_.resize(nA, c_);
    for (long a = 0; a < nA; ++a) {
      const double* z = nu.data.row(rows[a]);
      rho_[a] = in_.ratios.rho_at(p_, z);
      for (int m = 0; m < c_; ++m) t_(a, m) = spec.basis[m].mono(z) * in_.terminal[p_](a, m);
    }
    floor_ = nu.options.normalizer_floor;
  }

  int dim() const { return c_; }

  Eigen::VectorXd residual(const Eigen::VectorXd& b) const {
    const int G = grid_->size();
    RowMatrix W(G, 1);
    const Eigen::MatrixXd& tm = in_.terminal[p_];
    for (int g = 0; g < G; ++g) {
      Eigen::VectorXd a = b.cwiseProduct(mono_.row(g).transpose());
      double v = 0;
      for (size_t t = 0; t < idx_[g].size(); ++t) v += omega_[g][t] * std::exp(tm.row(idx_[g][t]).dot(a));
      W(g, 0) = std::max(v, floor_);
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(c_);
    const long nA = t_.rows();
    for (long a = 0; a < nA; ++a) {
      double Wa;
      interpolate(*grid_, W, static_cast<int>(a), &Wa);
      double w = std::exp(t_.row(a).dot(b)) / Wa;
      rhs += (rho_[a] * w) * t_.row(a).transpose();
    }
    return lhs_ - rhs / static_cast<double>(nA);
  }

 private:
  const IndexNuisance& in_;
  int p_ = 0, c_ = 0;
  Eigen::VectorXd lhs_, rho_;
  Eigen::MatrixXd t_, mono_;
  std::unique_ptr<QueryGrid> grid_;
  std::vector<std::vector<int>> idx_;
  std::vector<std::vector<double>> omega_;
  double floor_ = 1e-8;
};

}  // namespace

MomentResult moment_match_beta(const FittedNuisance& nu, const MomentOptions& opt) {
  MomentResult res;
  res.beta = nu.beta;
  for (const BetaBlock& blk : nu.beta.layout) {
    MomentProblem prob(nu, blk.j, blk.s);
    Eigen::VectorXd b = nu.beta.slice(blk.j, blk.s);
    Eigen::VectorXd f = prob.residual(b);
    double norm = f.norm();
    int it = 0;
    bool ok = norm < opt.tol;
    while (!ok && it < opt.max_iter) {
      ++it;
      const int c = prob.dim();
      Eigen::MatrixXd J(c, c);
      for (int m = 0; m < c; ++m) {
        double h = 1e-6 * std::max(1.0, std::abs(b[m]));
        Eigen::VectorXd bp = b, bm = b;
        bp[m] += h;
        bm[m] -= h;
        J.col(m) = (prob.residual(bp) - prob.residual(bm)) / (2 * h);
      }
      Eigen::VectorXd step = -pseudo_inverse(J, 1e-12) * f;
      double alpha = 1.0;
      bool moved = false;
      while (alpha > 1e-10) {
        Eigen::VectorXd bn = b + alpha * step;
        Eigen::VectorXd fn = prob.residual(bn);
        if (fn.allFinite() && fn.norm() < norm) {
          b = bn;
          f = fn;
          norm = fn.norm();
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      ok = norm < opt.tol;
      if (!moved) break;
    }
    res.beta.set_slice(blk.j, blk.s, b);
    res.converged = res.converged && ok;
    res.iterations = std::max(res.iterations, it);
    res.residual = std::max(res.residual, norm);
  }
  return res;
}

ScoreEval efficient_score(const FittedNuisance& nu, const Dataset& rows) {
  InfluenceTable t = evaluate_gradients(nu, nullptr, rows);
  return {t.score, t.eff_score};
}

InformationMatrix information_matrix(const Eigen::MatrixXd& eff_score) {
  InformationMatrix out;
  const long n = eff_score.rows();
  if (n == 0) throw InsufficientData("information matrix needs scored rows");
  out.I = eff_score.transpose() * eff_score / static_cast<double>(n);
  out.I = 0.5 * (out.I + out.I.transpose());
  if (out.I.size() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.I);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  out.condition = out.min_eigenvalue > 0 ? es.eigenvalues().maxCoeff() / out.min_eigenvalue : INFINITY;
  out.singular = out.min_eigenvalue < 1e-10;
  out.pinv = pseudo_inverse(out.I, 1e-10);
  return out;
}

OneStepBeta one_step_beta(const FittedNuisance& nu, const BetaParam& beta_init, Diagnostics* diag) {
  if (!beta_init.values.allFinite()) throw InvalidShape("initial beta is not finite");
  FittedNuisance nb = nu.with_beta(beta_init);
  InfluenceTable t = evaluate_gradients(nb, nullptr, nb.data);
  OneStepBeta out;
  out.info = information_matrix(t.eff_score);
  out.mean_score = t.eff_score.colwise().mean().transpose();
  out.beta = beta_init;
  if (beta_init.size() > 0) out.beta.values += out.info.pinv * out.mean_score;
  if (diag) {
    diag->merge(t.diag);
    if (out.info.singular) {
      diag->singular_information = true;
      diag->warn("SingularInformation: information matrix is singular; pseudo-inverse update used");
    }
  }
  return out;
}

}  // namespace fusion
