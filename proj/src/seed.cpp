#include "fusion/seed.hpp"

#include <memory>

namespace fusion {

const SeedComponent* GradientSeed::find(int j) const {
  for (const auto& c : components)
    if (c.j == j) return &c;
  return nullptr;
}

RowMatrix prefix_rows(const Dataset& data, int j) {
  return data.Z().leftCols(j);
}

namespace {

RegressionFit law_fit(const ConditionalLaw& law) { return RegressionFit{law.smoother, law.y}; }

Eigen::VectorXd aligned_column(const FittedNuisance& nu, int j, int col) {
  const auto& rows = nu.at(j).law.rows;
  Eigen::VectorXd v(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) v[i] = nu.data.z(rows[i], col);
  return v;
}

GradientSeed ate_seed(const FittedNuisance& nu) {
  GradientSeed seed;
  if (!nu.propensity) throw NuisanceMissing("ate seed needs a propensity fit");
  const int grid = nu.options.grid_points;
  const Exec exec = nu.options.exec;
  auto mu = std::make_shared<RegressionFit>(law_fit(nu.at(3).law));
  auto prop = std::make_shared<PropensityFit>(*nu.propensity);

  SeedComponent c3;
  c3.j = 3;
  c3.scale = [prop](const double* x) {
    double p = (*prop)(x);
    return x[1] == 1.0 ? 1.0 / p : -1.0 / (1.0 - p);
  };
  c3.g = [](const RowMatrix& z) -> Eigen::VectorXd { return z.col(2); };

  SeedComponent c1;
  c1.j = 1;
  c1.scale = [](const double*) { return 1.0; };
  c1.g = [mu, grid, exec](const RowMatrix& z) -> Eigen::VectorXd {
    RowMatrix x1(z.rows(), 2), x0(z.rows(), 2);
    x1.col(0) = z.col(0);
    x0.col(0) = z.col(0);
    x1.col(1).setOnes();
    x0.col(1).setZero();
    return predict_on_grid(*mu, x1, grid, exec) - predict_on_grid(*mu, x0, grid, exec);
  };

  const auto& rows1 = nu.at(1).law.rows;
  RowMatrix z1(rows1.size(), 1);
  for (size_t i = 0; i < rows1.size(); ++i) z1(i, 0) = nu.data.z(rows1[i], 0);
  seed.plugin = c1.g(z1).mean();

  long clips = 0;
  for (int i = 0; i < nu.data.n(); ++i) (*prop)(nu.data.row(i), &clips);
  seed.diag.propensity_clips = clips;
  if (clips > 0) seed.diag.warn("propensity scores clipped to [pmin, 1 - pmin]");
  seed.components = {c1, c3};
  return seed;
}

GradientSeed working_linear_seed(const FittedNuisance& nu) {
  GradientSeed seed;
  const int c = nu.estimand.coefficient;
  const int grid = nu.options.grid_points;
  const Exec exec = nu.options.exec;
  auto mu = std::make_shared<RegressionFit>(law_fit(nu.at(2).law));

  Eigen::VectorXd x = aligned_column(nu, 1, 0);
  RowMatrix X = Eigen::Map<RowMatrix>(x.data(), x.size(), 1);
  Eigen::VectorXd m = predict_on_grid(*mu, X, grid, exec);
  const double n = static_cast<double>(x.size());
  Eigen::Matrix2d G;
  G << 1.0, x.mean(), x.mean(), x.squaredNorm() / n;
  Eigen::Vector2d b(m.mean(), x.dot(m) / n);
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(G);
  double smax = svd.singularValues()[0], smin = svd.singularValues()[1];
  if (!(smin > 1e-12 * smax)) throw SingularJacobian("least-squares Jacobian is singular (constant covariate?)");
  Eigen::Matrix2d Ginv = G.inverse();
  Eigen::Vector2d theta = Ginv * b;
  Eigen::Vector2d row = Ginv.row(c).transpose();
  seed.plugin = theta[c];

  SeedComponent c1;
  c1.j = 1;
  c1.scale = [](const double*) { return 1.0; };
  c1.g = [mu, grid, exec, row, theta](const RowMatrix& z) -> Eigen::VectorXd {
    RowMatrix xx = z.leftCols(1);
    Eigen::VectorXd mz = predict_on_grid(*mu, xx, grid, exec);
    Eigen::VectorXd out(z.rows());
    for (long i = 0; i < z.rows(); ++i) {
      double xi = z(i, 0);
      out[i] = (row[0] + row[1] * xi) * (mz[i] - theta[0] - theta[1] * xi);
    }
    return out;
  };
  SeedComponent c2;
  c2.j = 2;
  c2.scale = [row](const double* xx) { return row[0] + row[1] * xx[0]; };
  c2.g = [](const RowMatrix& z) -> Eigen::VectorXd { return z.col(1); };
  seed.components = {c1, c2};
  return seed;
}

GradientSeed moment_seed(const FittedNuisance& nu, bool variance) {
  GradientSeed seed;
  Eigen::VectorXd y = aligned_column(nu, 1, 0);
  double mu = y.mean();
  SeedComponent c1;
  c1.j = 1;
  c1.scale = [](const double*) { return 1.0; };
  if (variance)
    c1.g = [mu](const RowMatrix& z) -> Eigen::VectorXd { return (z.col(0).array() - mu).square().matrix(); };
  else
    c1.g = [](const RowMatrix& z) -> Eigen::VectorXd { return z.col(0); };
  seed.plugin = variance ? (y.array() - mu).square().mean() : mu;
  seed.components = {c1};
  return seed;
}

}  // namespace

GradientSeed seed_gradient(const FittedNuisance& nu) {
  GradientSeed s;
  switch (nu.estimand.kind) {
    case EstimandSpec::Kind::ate: s = ate_seed(nu); break;
    case EstimandSpec::Kind::working_linear: s = working_linear_seed(nu); break;
    case EstimandSpec::Kind::mean: s = moment_seed(nu, false); break;
    case EstimandSpec::Kind::variance: s = moment_seed(nu, true); break;
  }
  s.estimand = nu.estimand;
  return s;
}

double seed_value(const GradientSeed& seed, const FittedNuisance& nu, int j, const double* zbar_j) {
  const SeedComponent* c = seed.find(j);
  if (!c) return 0.0;
  const ConditionalLaw& law = nu.at(j).law;
  std::vector<int> idx;
  std::vector<double> w;
  law.weights(zbar_j, idx, w);
  RowMatrix z(idx.size() + 1, j);
  for (size_t t = 0; t < idx.size(); ++t) {
    for (int col = 0; col < j - 1; ++col) z(t, col) = zbar_j[col];
    z(t, j - 1) = law.y[idx[t]];
  }
  for (int col = 0; col < j; ++col) z(idx.size(), col) = zbar_j[col];
  Eigen::VectorXd g = c->g(z);
  double eg = 0;
  for (size_t t = 0; t < idx.size(); ++t) eg += w[t] * g[t];
  return c->scale(zbar_j) * (g[idx.size()] - eg);
}

}  // namespace fusion
