#include "fusion/engine.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fusion/parallel.hpp"

namespace fusion {

Eigen::VectorXd PointLaw::r() const { return (wstar * delta_tilde).cwiseInverse(); }

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A, double rel_tol, int* rank, Eigen::VectorXd* sv) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  double cut = s.size() ? rel_tol * s[0] : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  int r = 0;
  for (long i = 0; i < s.size(); ++i)
    if (s[i] > cut && s[i] > 0) {
      inv[i] = 1.0 / s[i];
      ++r;
    }
  if (rank) *rank = r;
  if (sv) *sv = s;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

FusionMatrix fusion_matrix(const PointLaw& law) {
  const long K = law.delta_tilde.size();
  FusionMatrix F;
  Eigen::VectorXd r = law.r();
  Eigen::VectorXd wr = law.omega.cwiseProduct(r);
  F.M = law.delta_tilde.cwiseInverse().asDiagonal();
  F.M.noalias() -= law.wstar.transpose() * wr.asDiagonal() * law.wstar;
  F.M = 0.5 * (F.M + F.M.transpose());
  // Tolerance relative to the scale of diag(1/delta) so that the exact null
  // direction (and the all-zero matrix when K = 1) is dropped.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(F.M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  F.singular_values = svd.singularValues();
  double scale = std::max(F.singular_values.size() ? F.singular_values[0] : 0.0,
                          law.delta_tilde.cwiseInverse().maxCoeff());
  double cut = 1e-10 * scale;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(K);
  double smin = 0;
  for (long i = 0; i < K; ++i)
    if (F.singular_values[i] > cut) {
      inv[i] = 1.0 / F.singular_values[i];
      smin = F.singular_values[i];
      ++F.rank;
    }
  if (F.rank == 0 && K > 1) throw AllSingular("fusion matrix has no singular value above the threshold");
  F.condition = F.rank ? F.singular_values[0] / smin : 0.0;
  F.pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return F;
}

Projection projection(const PointLaw& law, const FusionMatrix& F, const Eigen::VectorXd& f) {
  Projection p;
  Eigen::VectorXd r = law.r();
  p.mean = law.omega.dot(f);
  p.ubar = law.wstar.transpose() * law.omega.cwiseProduct(r);
  p.kappa = F.pinv * (law.wstar.transpose() * law.omega.cwiseProduct(f));
  return p;
}

Eigen::VectorXd apply_projection(const PointLaw& law, const Projection& p, const Eigen::VectorXd& f) {
  Eigen::VectorXd r = law.r();
  Eigen::VectorXd out = f.array() - p.mean;
  out += r.cwiseProduct(law.wstar * p.kappa);
  out.array() -= p.ubar.dot(p.kappa);
  return out;
}

namespace {

struct Counters {
  long clips = 0, floors = 0, empty = 0, rank = 0;
};

// Support, normalizers and w* at x; mono holds the basis monomials at x.
PointLaw build_law(const FittedNuisance& nu, const IndexNuisance& in, const double* x, Counters& ct) {
  PointLaw L;
  std::vector<double> w;
  L.in_support = in.law.weights(x, L.idx, w);
  if (!L.in_support) ++ct.empty;
  const long T = static_cast<long>(L.idx.size());
  const long K = static_cast<long>(in.S.size());
  L.omega = Eigen::Map<Eigen::VectorXd>(w.data(), T);
  L.y.resize(T);
  for (long t = 0; t < T; ++t) L.y[t] = in.law.y[L.idx[t]];
  L.delta_tilde.resize(K);
  for (long p = 0; p < K; ++p) L.delta_tilde[p] = in.delta[p] * in.ratios.rho_at(static_cast<int>(p), x, &ct.clips);
  L.wstar = Eigen::MatrixXd::Ones(T, K);
  L.normalizer = Eigen::VectorXd::Ones(K);
  const double lo = nu.options.ratio_min, hi = nu.options.ratio_max;
  Eigen::VectorXd raw(T);
  for (long p = 0; p < K; ++p) {
    if (!in.weak[p]) continue;
    const WeightSpec& spec = *in.spec[p];
    if (spec.family == WeightFamily::truncation) {
      for (long t = 0; t < T; ++t) raw[t] = L.y[t] >= in.beta[p][0] ? 1.0 : 0.0;
    } else {
      const long c = static_cast<long>(spec.basis.size());
      Eigen::VectorXd a(c);
      for (long m = 0; m < c; ++m) a[m] = in.beta[p][m] * spec.basis[m].mono(x);
      const Eigen::MatrixXd& tm = in.terminal[p];
      for (long t = 0; t < T; ++t) raw[t] = std::exp(tm.row(L.idx[t]).dot(a));
    }
    double W = L.omega.dot(raw);
    if (!(W > nu.options.normalizer_floor)) {
      W = nu.options.normalizer_floor;
      ++ct.floors;
    }
    L.normalizer[p] = W;
    for (long t = 0; t < T; ++t) L.wstar(t, p) = raw[t] == 0.0 ? 0.0 : clip_ratio(raw[t] / W, lo, hi, &ct.clips);
  }
  return L;
}

struct Block {
  int pos;     // position in S
  int dim;     // number of estimated coordinates
  int offset;  // into beta
  int o_EPt, o_Ea, o_ka, o_EPat;
};

// Offsets of the per-point summary vector for one index.
struct Layout {
  int K = 0;
  enum { scale, lambda, lsec, Eg, Ed, cd, head };
  int o_dt = 0, o_W = 0, o_ubar = 0, o_kd = 0, o_EPdt = 0;
  std::vector<Block> blocks;
  int size = 0;

  Layout(const FittedNuisance& nu, const IndexNuisance& in) {
    K = static_cast<int>(in.S.size());
    int o = head;
    o_dt = o;
    o += K;
    o_W = o;
    o += K;
    o_ubar = o;
    o += K;
    o_kd = o;
    o += K;
    o_EPdt = o;
    o += K;
    for (int p = 0; p < K; ++p) {
      if (!in.weak[p] || in.spec[p]->dim() == 0) continue;
      Block b;
      b.pos = p;
      b.dim = in.spec[p]->dim();
      b.offset = nu.beta.block(in.j, in.S[p]).offset;
      b.o_EPt = o;
      o += b.dim;
      b.o_Ea = o;
      o += b.dim;
      b.o_ka = o;
      o += K * b.dim;
      b.o_EPat = o;
      o += K * b.dim;
      blocks.push_back(b);
    }
    size = o;
  }
};

void summarize(const FittedNuisance& nu, const IndexNuisance& in, const Layout& lay, const SeedComponent* sc,
               const Eigen::VectorXd& g_law, const double* x, double* out, Counters& ct) {
  std::fill(out, out + lay.size, 0.0);
  PointLaw L = build_law(nu, in, x, ct);
  const long T = L.omega.size();
  const int K = lay.K;
  double scale = sc ? sc->scale(x) : 0.0;
  double lam = in.ratios.lambda(x, &ct.clips);
  double sumdt = L.delta_tilde.sum();
  Eigen::VectorXd gt(T);
  for (long t = 0; t < T; ++t) gt[t] = sc ? g_law[L.idx[t]] : 0.0;
  double Eg = L.omega.dot(gt);
  out[Layout::scale] = scale;
  out[Layout::lambda] = lam;
  out[Layout::lsec] = in.S == in.A ? lam : lam * sumdt / in.PS;
  out[Layout::Eg] = Eg;
  for (int p = 0; p < K; ++p) {
    out[lay.o_dt + p] = L.delta_tilde[p];
    out[lay.o_W + p] = L.normalizer[p];
  }
  if (!in.has_weak()) return;

  FusionMatrix F = fusion_matrix(L);
  if (K - F.rank > 1) ++ct.rank;
  Eigen::VectorXd r = L.r();
  double cd = lam * sumdt / in.PS;
  Eigen::VectorXd d = (cd * scale) * (gt.array() - Eg).matrix().cwiseProduct(r);
  Projection pd = projection(L, F, d);
  Eigen::VectorXd dt = apply_projection(L, pd, d);
  Eigen::VectorXd EPdt = L.wstar.transpose() * L.omega.cwiseProduct(dt);
  out[Layout::Ed] = pd.mean;
  out[Layout::cd] = cd;
  for (int p = 0; p < K; ++p) {
    out[lay.o_ubar + p] = pd.ubar[p];
    out[lay.o_kd + p] = pd.kappa[p];
    out[lay.o_EPdt + p] = EPdt[p];
  }
  for (const Block& b : lay.blocks) {
    const auto& basis = in.spec[b.pos]->basis;
    const Eigen::MatrixXd& tm = in.terminal[b.pos];
    Eigen::MatrixXd Tb(T, b.dim);
    for (int m = 0; m < b.dim; ++m) {
      double mono = basis[m].mono(x);
      for (long t = 0; t < T; ++t) Tb(t, m) = mono * tm(L.idx[t], m);
    }
    Eigen::VectorXd wb = L.wstar.col(b.pos);
    Eigen::VectorXd EPt = Tb.transpose() * L.omega.cwiseProduct(wb);
    Eigen::VectorXd coef = L.delta_tilde[b.pos] * wb.cwiseProduct(r);
    for (int m = 0; m < b.dim; ++m) {
      Eigen::VectorXd a = coef.cwiseProduct((Tb.col(m).array() - EPt[m]).matrix());
      Projection pa = projection(L, F, a);
      Eigen::VectorXd as = apply_projection(L, pa, a);
      Eigen::VectorXd EPat = L.wstar.transpose() * L.omega.cwiseProduct(as);
      out[b.o_EPt + m] = EPt[m];
      out[b.o_Ea + m] = pa.mean;
      for (int p = 0; p < K; ++p) {
        out[b.o_ka + m * K + p] = pa.kappa[p];
        out[b.o_EPat + m * K + p] = EPat[p];
      }
    }
  }
}

struct RowOut {
  double DP = 0, DA = 0, Dt = 0;
  Counters ct;
};

}  // namespace

PointLaw point_law(const FittedNuisance& nu, int j, const double* x, Diagnostics* diag) {
  Counters ct;
  PointLaw L = build_law(nu, nu.at(j), x, ct);
  if (diag) {
    diag->ratio_clips += ct.clips;
    diag->normalizer_floors += ct.floors;
    diag->empty_neighborhoods += ct.empty;
  }
  return L;
}

FusionMatrix fusion_matrix(const FittedNuisance& nu, int j, const double* x) {
  return fusion_matrix(point_law(nu, j, x));
}

double lambda_dagger(const FittedNuisance& nu, int j, const double* zbar_j, int s) {
  const IndexNuisance& in = nu.at(j);
  if (s < 1 || s > nu.data.k() || in.pos[s] < 0) throw KeyError("source " + std::to_string(s) + " not in S_j");
  double lam = in.ratios.lambda(zbar_j);
  if (!in.weak[in.pos[s]]) return lam;
  return clip_ratio(lam / density_ratio(nu, j, s, zbar_j), nu.options.ratio_min, nu.options.ratio_max, nullptr);
}

InfluenceTable evaluate_gradients(const FittedNuisance& nu, const GradientSeed* seed, const Dataset& rows) {
  return evaluate_gradients(nu, seed, rows, nu.options.exec);
}

InfluenceTable evaluate_gradients(const FittedNuisance& nu, const GradientSeed* seed, const Dataset& rows, Exec exec) {
  if (rows.d() != nu.data.d() || rows.k() != nu.data.k()) throw InvalidShape("rows do not match the fitted data shape");
  const int n = rows.n();
  const int tdim = nu.beta.size();
  InfluenceTable tab;
  tab.plugin = seed ? seed->plugin : 0.0;
  tab.D_P = Eigen::VectorXd::Zero(n);
  tab.D_A = Eigen::VectorXd::Zero(n);
  tab.D_tilde = Eigen::VectorXd::Zero(n);
  tab.score = Eigen::MatrixXd::Zero(n, tdim);
  tab.eff_score = Eigen::MatrixXd::Zero(n, tdim);
  if (seed)
    for (const auto& c : seed->components) tab.seed_indices.push_back(c.j);
  tab.D_tilde_j = Eigen::MatrixXd::Zero(n, tab.seed_indices.size());
  Counters total;

  for (const IndexNuisance& in : nu.index) {
    const int j = in.j;
    const SeedComponent* sc = seed ? seed->find(j) : nullptr;
    const int col = sc ? static_cast<int>(std::find(tab.seed_indices.begin(), tab.seed_indices.end(), j) -
                                          tab.seed_indices.begin())
                       : -1;
    Layout lay(nu, in);
    if (!sc && lay.blocks.empty()) continue;
    const int K = lay.K;

    Eigen::VectorXd g_law, g_rows;
    if (sc) {
      RowMatrix zl(in.law.rows.size(), j);
      for (size_t t = 0; t < in.law.rows.size(); ++t)
        for (int c = 0; c < j; ++c) zl(t, c) = nu.data.z(in.law.rows[t], c);
      g_law = sc->g(zl);
      g_rows = sc->g(prefix_rows(rows, j));
    }

    std::vector<int> qrows;
    for (int i = 0; i < n; ++i)
      if (in.pos[rows.s(i)] >= 0) qrows.push_back(i);
    RowMatrix X(qrows.size(), j - 1);
    for (size_t q = 0; q < qrows.size(); ++q)
      for (int c = 0; c < j - 1; ++c) X(q, c) = rows.z(qrows[q], c);
    QueryGrid grid(X, in.law.smoother.discrete(), nu.options.grid_points);

    RowMatrix V(grid.size(), lay.size);
    std::vector<Counters> pct(grid.size());
    for_each_index(grid.size(), exec, [&](long g) {
      summarize(nu, in, lay, sc, g_law, grid.point(static_cast<int>(g)), V.data() + g * lay.size, pct[g]);
    });

    const bool weak = in.has_weak();
    const double lo = nu.options.ratio_min, hi = nu.options.ratio_max;
    std::vector<Counters> rct(qrows.size());
    for_each_index(static_cast<long>(qrows.size()), exec, [&](long q) {
      const int i = qrows[q];
      Counters& ct = rct[q];
      std::vector<double> v(lay.size);
      interpolate(grid, V, static_cast<int>(q), v.data());
      const double* z = rows.row(i);
      const int p = in.pos[rows.s(i)];
      const bool aligned = !in.weak[p];
      double DQ = sc ? v[Layout::scale] * (g_rows[i] - v[Layout::Eg]) : 0.0;
      if (!weak) {
        double D = v[Layout::lsec] / in.PA * DQ;
        tab.D_P[i] += D;
        tab.D_A[i] += D;
        tab.D_tilde[i] += D;
        if (col >= 0) tab.D_tilde_j(i, col) = D;
        return;
      }
      // w* of every source at this row
      Eigen::VectorXd ws = Eigen::VectorXd::Ones(K);
      for (int m = 0; m < K; ++m) {
        if (!in.weak[m]) continue;
        const WeightSpec& spec = *in.spec[m];
        double raw;
        if (spec.family == WeightFamily::truncation) {
          raw = z[j - 1] >= in.beta[m][0] ? 1.0 : 0.0;
        } else {
          double e = 0;
          for (size_t b = 0; b < spec.basis.size(); ++b) e += in.beta[m][b] * spec.basis[b].eval(z);
          raw = std::exp(e);
        }
        ws[m] = raw == 0.0 ? 0.0 : clip_ratio(raw / v[lay.o_W + m], lo, hi, &ct.clips);
      }
      Eigen::Map<const Eigen::VectorXd> dtl(v.data() + lay.o_dt, K), ubar(v.data() + lay.o_ubar, K),
          kd(v.data() + lay.o_kd, K);
      double r = 1.0 / ws.dot(dtl);
      Eigen::VectorXd du = ws * r - ubar;
      double lam = v[Layout::lambda];
      double ldag = aligned ? lam : clip_ratio(lam / ws[p], lo, hi, &ct.clips);
      tab.D_P[i] += ldag / in.PS * DQ;
      if (aligned) tab.D_A[i] += v[Layout::lsec] / in.PA * DQ;
      double d = v[Layout::cd] * DQ * r;
      double dt = d - v[Layout::Ed] + du.dot(kd);
      double Dt = dt - v[lay.o_EPdt + p];
      tab.D_tilde[i] += Dt;
      if (col >= 0) tab.D_tilde_j(i, col) = Dt;
      for (const Block& b : lay.blocks) {
        const auto& basis = in.spec[b.pos]->basis;
        double cb = dtl[b.pos] * ws[b.pos] * r;
        for (int m = 0; m < b.dim; ++m) {
          double tc = basis[m].eval(z) - v[b.o_EPt + m];
          double score = rows.s(i) == in.S[b.pos] ? tc : 0.0;
          Eigen::Map<const Eigen::VectorXd> ka(v.data() + b.o_ka + m * K, K);
          double astar = cb * tc - v[b.o_Ea + m] + du.dot(ka);
          tab.score(i, b.offset + m) = score;
          tab.eff_score(i, b.offset + m) = score - (astar - v[b.o_EPat + m * K + p]);
        }
      }
    });
    for (const auto& c : pct) {
      total.clips += c.clips;
      total.floors += c.floors;
      total.empty += c.empty;
      total.rank += c.rank;
    }
    for (const auto& c : rct) total.clips += c.clips;
  }

  tab.diag.ratio_clips = total.clips;
  tab.diag.normalizer_floors = total.floors;
  tab.diag.empty_neighborhoods = total.empty;
  tab.diag.rank_warnings = total.rank;
  if (total.floors) tab.diag.warn("DegenerateNormalizer: normalizer fits floored");
  if (total.empty) tab.diag.warn("conditional law evaluated away from the aligned rows");
  if (total.rank) tab.diag.warn("fusion matrix rank deficiency above 1");

  if (tdim > 0) {
    tab.grad_gamma = tab.score.transpose() * tab.D_tilde / n;
    tab.info = tab.eff_score.transpose() * tab.eff_score / n;
    tab.info = 0.5 * (tab.info + tab.info.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tab.info);
    tab.info_min_eigenvalue = es.eigenvalues().minCoeff();
    double emax = es.eigenvalues().maxCoeff();
    tab.info_condition = tab.info_min_eigenvalue > 0 ? emax / tab.info_min_eigenvalue : INFINITY;
    if (tab.info_min_eigenvalue < 1e-10) {
      tab.diag.singular_information = true;
      tab.diag.warn("SingularInformation: information matrix is singular; pseudo-inverse used");
    }
    tab.info_pinv = pseudo_inverse(tab.info, 1e-10);
    tab.D_eff = tab.D_tilde - tab.eff_score * (tab.info_pinv * tab.grad_gamma);
  } else {
    tab.grad_gamma = Eigen::VectorXd::Zero(0);
    tab.info = Eigen::MatrixXd::Zero(0, 0);
    tab.info_pinv = Eigen::MatrixXd::Zero(0, 0);
    tab.D_eff = tab.D_tilde;
  }
  return tab;
}

namespace {

InfluenceTable one_row(const FittedNuisance& nu, const GradientSeed& seed, const Observation& obs) {
  Dataset d = Dataset::from_rows({obs}, nu.data.d(), nu.data.k());
  return evaluate_gradients(nu, &seed, d, Exec::serial);
}

}  // namespace

double gradient_known_beta(const FittedNuisance& nu, const GradientSeed& seed, const Observation& obs) {
  return one_row(nu, seed, obs).D_P[0];
}

double gradient_aligned_only(const FittedNuisance& nu, const GradientSeed& seed, const Observation& obs) {
  return one_row(nu, seed, obs).D_A[0];
}

double canonical_gradient_fixed_beta(const FittedNuisance& nu, const GradientSeed& seed, const Observation& obs) {
  return one_row(nu, seed, obs).D_tilde[0];
}

double efficient_gradient(const FittedNuisance& nu, const GradientSeed& seed, const Observation& obs,
                          const Eigen::VectorXd& grad_gamma, const Eigen::MatrixXd& info_pinv) {
  InfluenceTable t = one_row(nu, seed, obs);
  if (grad_gamma.size() == 0) return t.D_tilde[0];
  return t.D_tilde[0] - t.eff_score.row(0).dot(info_pinv * grad_gamma);
}

Eigen::VectorXd gamma_derivative(const InfluenceTable& table) { return table.grad_gamma; }

Eigen::VectorXd gamma_finite_difference(const FittedNuisance& nu, const InfluenceTable& table, const Dataset& rows,
                                        double h) {
  const int tdim = nu.beta.size();
  Eigen::VectorXd out(tdim);
  for (const BetaBlock& blk : nu.beta.layout) {
    std::vector<int> src = rows.rows_in({blk.s});
    std::vector<double> base(src.size());
    for (size_t q = 0; q < src.size(); ++q) base[q] = density_ratio(nu, blk.j, blk.s, rows.row(src[q]));
    for (int m = 0; m < blk.len; ++m) {
      double gam[2];
      for (int sgn = 0; sgn < 2; ++sgn) {
        BetaParam b = nu.beta;
        b.values[blk.offset + m] += sgn == 0 ? h : -h;
        FittedNuisance nb = nu.with_beta(b);
        double sum = table.D_tilde.sum();
        for (size_t q = 0; q < src.size(); ++q) {
          double wr = density_ratio(nb, blk.j, blk.s, rows.row(src[q])) / base[q];
          sum += table.D_tilde[src[q]] * (wr - 1.0);
        }
        gam[sgn] = sum / rows.n();
      }
      out[blk.offset + m] = (gam[0] - gam[1]) / (2 * h);
    }
  }
  return out;
}

}  // namespace fusion
