#include "retprobe/metrology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "retprobe/numerics.hpp"

namespace retprobe::metrology {

namespace {

retina::NetworkSpec shifted(const retina::NetworkSpec& spec, int index, double d) {
  retina::NetworkSpec s = spec;
  if (index < 0) {
    for (double& w : s.weights) w += d;
  } else {
    s.weights[static_cast<std::size_t>(index)] += d;
  }
  return s;
}

struct Scores {
  double atom_score = 0.0;
  bool atom_valid = false;
  std::vector<double> s;
  std::vector<unsigned char> valid;
  double mass_defect = 0.0;
};

// Central differences of the log law at the base grid nodes. index < 0
// perturbs every weight jointly (the equal-weights reduction).
Scores scores_at(const retina::MixedDistribution& base, const retina::NetworkSpec& spec,
                 const photon::PhotonDistribution& photons, int index, double delta,
                 const FisherOptions& opt, double expected_mass) {
  const retina::MixedDistribution plus =
      retina::network_output(shifted(spec, index, delta), photons, opt.grid);
  const retina::MixedDistribution minus =
      retina::network_output(shifted(spec, index, -delta), photons, opt.grid);

  Scores out;
  out.mass_defect = std::max(std::abs(plus.total_mass() - expected_mass),
                             std::abs(minus.total_mass() - expected_mass));
  if (out.mass_defect > retina::kMassTolerance) {
    std::ostringstream msg;
    msg << "mass_defect " << out.mass_defect << " exceeds tolerance";
    throw std::runtime_error(msg.str());
  }

  const double inv2d = 1.0 / (2.0 * delta);
  if (base.atom_mass > opt.density_floor && plus.atom_mass > opt.density_floor &&
      minus.atom_mass > opt.density_floor) {
    out.atom_valid = true;
    out.atom_score = (std::log(plus.atom_mass) - std::log(minus.atom_mass)) * inv2d;
  }

  const std::size_t n = base.density.size();
  out.s.assign(n, 0.0);
  out.valid.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    const double f0 = base.density[j];
    if (f0 <= opt.density_floor) continue;
    const double x = base.point(static_cast<std::int64_t>(j));
    const double fp = plus.density_at(x);
    const double fm = minus.density_at(x);
    if (fp <= opt.density_floor || fm <= opt.density_floor) continue;
    out.s[j] = (std::log(fp) - std::log(fm)) * inv2d;
    out.valid[j] = 1;
  }
  return out;
}

double fisher_entry(const retina::MixedDistribution& base, const Scores& a, const Scores& b,
                    const FisherOptions& opt) {
  std::vector<double> integrand(base.density.size(), 0.0);
  for (std::size_t j = 0; j < integrand.size(); ++j)
    if (a.valid[j] && b.valid[j]) integrand[j] = base.density[j] * a.s[j] * b.s[j];
  double val = numerics::trapezoid(integrand, base.step);
  if (opt.domain == FisherDomain::Full && a.atom_valid && b.atom_valid)
    val += base.atom_mass * a.atom_score * b.atom_score;
  return val;
}

bool entries_close(const std::vector<double>& full, const std::vector<double>& half,
                   double rel) {
  double scale = 0.0;
  for (double v : half) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return true;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const double denom = std::max(std::abs(half[i]), 1e-6 * scale);
    if (std::abs(full[i] - half[i]) > rel * denom) return false;
  }
  return true;
}

void check_weights(const retina::NetworkSpec& spec, double delta_rel) {
  for (double w : spec.weights)
    if (!(w > 0.0) || !(w > delta_rel * w))
      throw std::invalid_argument("fisher: every free weight must be positive");
}

}  // namespace

ScoreProfile score_profile(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons, int weight_index,
                           double delta, const FisherOptions& opt) {
  if (weight_index < 0 || static_cast<std::size_t>(weight_index) >= spec.weights.size())
    throw std::invalid_argument("score_profile: weight index out of range");
  if (!(delta > 0.0) || !(spec.weights[static_cast<std::size_t>(weight_index)] > delta))
    throw std::invalid_argument("score_profile: need 0 < delta < w_i");

  const double expected = photons.total_mass();
  ScoreProfile out;
  out.base = retina::network_output(spec, photons, opt.grid);
  out.mass_defect = std::abs(out.base.total_mass() - expected);
  if (out.mass_defect > retina::kMassTolerance)
    throw std::runtime_error("score_profile: base law violates mass conservation");

  Scores sc = scores_at(out.base, spec, photons, weight_index, delta, opt, expected);
  out.atom_score = sc.atom_score;
  out.atom_valid = sc.atom_valid;
  out.density_score = std::move(sc.s);
  out.valid = std::move(sc.valid);
  out.mass_defect = std::max(out.mass_defect, sc.mass_defect);
  return out;
}

ScalarFisher fisher_scalar(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons,
                           const FisherOptions& opt) {
  if (spec.weights.empty()) throw std::invalid_argument("fisher_scalar: no weights");
  check_weights(spec, opt.delta_rel);
  double wmin = spec.weights[0];
  for (double w : spec.weights) wmin = std::min(wmin, w);
  const double delta = opt.delta_rel * wmin;

  const double expected = photons.total_mass();
  const retina::MixedDistribution base = retina::network_output(spec, photons, opt.grid);

  ScalarFisher out;
  out.mass_defect = std::abs(base.total_mass() - expected);
  if (out.mass_defect > retina::kMassTolerance)
    throw std::runtime_error("fisher_scalar: base law violates mass conservation");

  Scores sc = scores_at(base, spec, photons, -1, delta, opt, expected);
  out.value = fisher_entry(base, sc, sc, opt);
  out.mass_defect = std::max(out.mass_defect, sc.mass_defect);

  if (opt.check_plateau) {
    Scores sc_half = scores_at(base, spec, photons, -1, 0.5 * delta, opt, expected);
    const double half = fisher_entry(base, sc_half, sc_half, opt);
    out.mass_defect = std::max(out.mass_defect, sc_half.mass_defect);
    out.plateau_ok = entries_close({out.value}, {half}, opt.plateau_rel);
  }
  return out;
}

FisherMatrix fisher_matrix(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons,
                           const FisherOptions& opt) {
  const int dim = static_cast<int>(spec.weights.size());
  if (dim < 2) throw std::invalid_argument("fisher_matrix: need at least two free weights");
  check_weights(spec, opt.delta_rel);

  const double expected = photons.total_mass();
  const retina::MixedDistribution base = retina::network_output(spec, photons, opt.grid);

  FisherMatrix out;
  out.dim = dim;
  out.mass_defect = std::abs(base.total_mass() - expected);
  if (out.mass_defect > retina::kMassTolerance)
    throw std::runtime_error("fisher_matrix: base law violates mass conservation");

  std::vector<Scores> full(static_cast<std::size_t>(dim));
  std::vector<Scores> half;
  if (opt.check_plateau) half.resize(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    const double delta = opt.delta_rel * spec.weights[static_cast<std::size_t>(i)];
    full[static_cast<std::size_t>(i)] =
        scores_at(base, spec, photons, i, delta, opt, expected);
    out.mass_defect = std::max(out.mass_defect, full[static_cast<std::size_t>(i)].mass_defect);
    if (opt.check_plateau) {
      half[static_cast<std::size_t>(i)] =
          scores_at(base, spec, photons, i, 0.5 * delta, opt, expected);
      out.mass_defect = std::max(out.mass_defect, half[static_cast<std::size_t>(i)].mass_defect);
    }
  }

  auto assemble = [&](const std::vector<Scores>& sc) {
    std::vector<double> entries(static_cast<std::size_t>(dim * dim), 0.0);
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) {
        const double e = fisher_entry(base, sc[static_cast<std::size_t>(i)],
                                      sc[static_cast<std::size_t>(j)], opt);
        entries[static_cast<std::size_t>(i * dim + j)] = e;
        entries[static_cast<std::size_t>(j * dim + i)] = e;
      }
    return entries;
  };

  out.entries = assemble(full);
  if (opt.check_plateau)
    out.plateau_ok = entries_close(out.entries, assemble(half), opt.plateau_rel);
  return out;
}

CrlbResult crlb(const FisherMatrix& fisher, double cond_limit) {
  const int n = fisher.dim;
  if (n < 1 || fisher.entries.size() != static_cast<std::size_t>(n * n))
    throw std::invalid_argument("crlb: malformed Fisher matrix");

  const numerics::EigenResult eig = numerics::sym_eigen(fisher.entries, n);
  const double lmax = eig.values.front();
  const double lmin = eig.values.back();
  if (!(lmin > 0.0)) {
    std::ostringstream msg;
    msg << "singular_fisher min_eigenvalue=" << lmin;
    throw std::domain_error(msg.str());
  }
  const double cond = lmax / lmin;
  if (cond > cond_limit) {
    std::ostringstream msg;
    msg << "ill_conditioned_fisher cond=" << cond;
    throw std::domain_error(msg.str());
  }

  CrlbResult out;
  out.dim = n;
  out.condition = cond;
  out.matrix.assign(static_cast<std::size_t>(n * n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k)
        s += eig.vectors[static_cast<std::size_t>(i * n + k)] *
             eig.vectors[static_cast<std::size_t>(j * n + k)] / eig.values[static_cast<std::size_t>(k)];
      out.matrix[static_cast<std::size_t>(i * n + j)] = s;
    }
  return out;
}

double unit_ball_volume(int dim) {
  if (dim < 1) throw std::invalid_argument("unit_ball_volume: dim < 1");
  const double n = static_cast<double>(dim);
  return std::pow(numerics::kPi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

EllipsoidReport ellipsoid(const std::vector<double>& crlb_matrix, int dim,
                          double confidence_level, VolumeConvention convention) {
  if (dim < 1 || crlb_matrix.size() != static_cast<std::size_t>(dim * dim))
    throw std::invalid_argument("ellipsoid: malformed covariance");
  if (!(confidence_level > 0.0 && confidence_level < 1.0))
    throw std::invalid_argument("ellipsoid: confidence outside (0,1)");

  const numerics::EigenResult eig = numerics::sym_eigen(crlb_matrix, dim);
  if (!(eig.values.back() > 0.0))
    throw std::invalid_argument("ellipsoid: covariance not positive definite");

  EllipsoidReport out;
  out.crlb = crlb_matrix;
  out.eigenvalues = eig.values;
  out.confidence_level = confidence_level;
  out.k = std::sqrt(numerics::chi2_quantile(dim, confidence_level));

  double axes = 1.0;
  const double scale = convention == VolumeConvention::KScaled ? out.k : 1.0;
  for (double lam : eig.values) axes *= scale * std::sqrt(lam);
  out.volume = unit_ball_volume(dim) * axes;
  return out;
}

PointResult evaluate_point(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons,
                           const FisherOptions& opt, double confidence_level,
                           VolumeConvention convention) {
  PointResult r;
  const int dim = static_cast<int>(spec.weights.size());
  r.metric_kind = dim == 1 ? "crlb" : "volume";
  try {
    if (dim == 1) {
      const ScalarFisher sf = fisher_scalar(spec, photons, opt);
      r.plateau_ok = sf.plateau_ok;
      r.mass_defect = sf.mass_defect;
      if (!(sf.value > 0.0) || !std::isfinite(sf.value))
        throw std::domain_error("singular_fisher scalar");
      r.value = 1.0 / sf.value;
    } else {
      const FisherMatrix fm = fisher_matrix(spec, photons, opt);
      r.plateau_ok = fm.plateau_ok;
      r.mass_defect = fm.mass_defect;
      const CrlbResult c = crlb(fm, opt.cond_limit);
      r.fisher_cond = c.condition;
      const EllipsoidReport rep = ellipsoid(c.matrix, dim, confidence_level, convention);
      r.value = rep.volume;
    }
  } catch (const std::domain_error& e) {
    r.status = e.what();
    r.value = std::numeric_limits<double>::quiet_NaN();
  } catch (const std::runtime_error& e) {
    r.status = e.what();
    r.value = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

std::vector<SweepRow> volume_sweep(const SweepRequest& request,
                                   const photon::PhotonDistribution& photons) {
  if (request.sweep_values.size() != request.weight_sets.size())
    throw std::invalid_argument("volume_sweep: sweep_values and weight_sets differ in length");
  std::vector<SweepRow> rows;
  rows.reserve(request.sweep_values.size());
  retina::NetworkSpec spec = request.base;
  for (std::size_t p = 0; p < request.sweep_values.size(); ++p) {
    spec.weights = request.weight_sets[p];
    SweepRow row;
    row.sweep_value = request.sweep_values[p];
    row.result = evaluate_point(spec, photons, request.options, request.confidence_level,
                                request.convention);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace retprobe::metrology
