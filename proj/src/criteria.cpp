#include "vmdnet/criteria.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "vmdnet/error.hpp"

namespace vmdnet::criteria {

ArFit fit_ar(std::span<const double> series, int order) {
  if (order < 1) fail(ErrorCode::InvalidConfig, "AR order must be >= 1");
  const std::size_t n = series.size();
  const auto r = static_cast<std::size_t>(order);
  if (n < r || n - r < r + 2) {
    fail(ErrorCode::TooShort, "AR(" + std::to_string(order) + ") needs at least " +
                                  std::to_string(2 * r + 2) + " samples, got " + std::to_string(n));
  }
  for (double v : series) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteInput, "AR input contains a non-finite value");
  }

  ArFit fit;
  fit.order = order;
  fit.n_effective = n - r;
  fit.coefficients.assign(r, 0.0);

  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (*lo == *hi) {
    fit.degenerate = true;
    fit.intercept = *lo;
    return fit;
  }

  // Normal equations for x_t = sum_i a_i x_{t-i} + c.
  const Eigen::Index dim = static_cast<Eigen::Index>(r + 1);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd row(dim);
  for (std::size_t t = r; t < n; ++t) {
    for (std::size_t i = 0; i < r; ++i) row(static_cast<Eigen::Index>(i)) = series[t - 1 - i];
    row(dim - 1) = 1.0;
    gram.noalias() += row * row.transpose();
    rhs.noalias() += series[t] * row;
  }
  const double ridge = 1e-12 * gram.trace() / static_cast<double>(dim);
  gram.diagonal().array() += ridge;
  const Eigen::VectorXd beta = gram.ldlt().solve(rhs);

  double rss = 0.0;
  for (std::size_t t = r; t < n; ++t) {
    double pred = beta(dim - 1);
    for (std::size_t i = 0; i < r; ++i) pred += beta(static_cast<Eigen::Index>(i)) * series[t - 1 - i];
    rss += (series[t] - pred) * (series[t] - pred);
  }
  for (std::size_t i = 0; i < r; ++i) fit.coefficients[i] = beta(static_cast<Eigen::Index>(i));
  fit.intercept = beta(dim - 1);
  fit.residual_variance = rss / static_cast<double>(fit.n_effective);
  if (!std::isfinite(fit.residual_variance)) fail(ErrorCode::NonFiniteValue, "AR fit diverged");
  return fit;
}

FicValue fic_from_variances(std::span<const double> sigma2, std::size_t length, int order) {
  const auto r = static_cast<std::size_t>(order);
  if (sigma2.empty()) fail(ErrorCode::InvalidConfig, "FIC needs at least one mode");
  if (length < r + 2) fail(ErrorCode::TooShort, "FIC needs T >= r + 2");
  double total = 0.0;
  for (double s : sigma2) total += s;
  const auto k = static_cast<double>(sigma2.size());
  const auto n_eff = static_cast<double>(length - r);
  const double penalty = (k * (order + 1) + 1) * std::log(n_eff);
  if (total <= 0.0) return {-std::numeric_limits<double>::infinity(), true};
  return {n_eff * std::log(total) + penalty, false};
}

FicValue fic(std::span<const double> modes, std::size_t num_modes, std::size_t length, int order,
             std::vector<double>* per_mode_sigma2) {
  if (modes.size() != num_modes * length) fail(ErrorCode::ShapeMismatch, "mode matrix is not K x T");
  std::vector<double> sigma2(num_modes);
  for (std::size_t k = 0; k < num_modes; ++k)
    sigma2[k] = fit_ar(modes.subspan(k * length, length), order).residual_variance;
  const FicValue v = fic_from_variances(sigma2, length, order);
  if (per_mode_sigma2) *per_mode_sigma2 = std::move(sigma2);
  return v;
}

namespace {

std::vector<int> bin_indices(std::span<const double> x, int bins) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  std::vector<int> idx(x.size(), 0);
  const double width = *hi - *lo;
  if (!(width > 0.0)) return idx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int b = static_cast<int>((x[i] - *lo) / width * bins);
    idx[i] = std::clamp(b, 0, bins - 1);
  }
  return idx;
}

// H = ln n - (1/n) sum c ln c, with the counts summed in ascending order so
// any permutation of the same multiset of counts gives the same bits.
double entropy_from_counts(std::vector<std::size_t> counts, std::size_t n) {
  std::sort(counts.begin(), counts.end());
  double acc = 0.0;
  for (std::size_t c : counts) {
    if (c > 0) acc += static_cast<double>(c) * std::log(static_cast<double>(c));
  }
  const auto dn = static_cast<double>(n);
  return std::log(dn) - acc / dn;
}

void check_pair(std::span<const double> x, std::span<const double> y, int bins) {
  if (x.size() != y.size()) fail(ErrorCode::ShapeMismatch, "MI inputs differ in length");
  if (x.size() < 32) fail(ErrorCode::TooShort, "MI needs at least 32 samples");
  if (bins < 2) fail(ErrorCode::InvalidConfig, "MI needs at least 2 bins");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      fail(ErrorCode::NonFiniteInput, "MI input contains a non-finite value");
  }
}

double mi_from_bins(const std::vector<int>& bx, const std::vector<int>& by, int bins) {
  const std::size_t n = bx.size();
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<std::size_t> cx(nb, 0), cy(nb, 0), cxy(nb * nb, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++cx[static_cast<std::size_t>(bx[i])];
    ++cy[static_cast<std::size_t>(by[i])];
    ++cxy[static_cast<std::size_t>(bx[i]) * nb + static_cast<std::size_t>(by[i])];
  }
  const double hx = entropy_from_counts(std::move(cx), n);
  const double hy = entropy_from_counts(std::move(cy), n);
  const double hxy = entropy_from_counts(std::move(cxy), n);
  return std::max(0.0, (hx + hy) - hxy);
}

}  // namespace

double binned_entropy(std::span<const double> x, int bins) {
  const auto idx = bin_indices(x, bins);
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (int b : idx) ++counts[static_cast<std::size_t>(b)];
  return entropy_from_counts(std::move(counts), x.size());
}

double mutual_information(std::span<const double> x, std::span<const double> y, int bins) {
  check_pair(x, y, bins);
  return mi_from_bins(bin_indices(x, bins), bin_indices(y, bins), bins);
}

std::vector<double> mi_matrix(std::span<const double> modes, std::size_t num_modes, std::size_t length,
                              int bins) {
  if (modes.size() != num_modes * length) fail(ErrorCode::ShapeMismatch, "mode matrix is not K x T");
  std::vector<std::vector<int>> binned(num_modes);
  for (std::size_t k = 0; k < num_modes; ++k) {
    const auto row = modes.subspan(k * length, length);
    if (k == 0) check_pair(row, row, bins);
    for (double v : row) {
      if (!std::isfinite(v)) fail(ErrorCode::NonFiniteInput, "mode contains a non-finite value");
    }
    binned[k] = bin_indices(row, bins);
  }
  std::vector<double> m(num_modes * num_modes, 0.0);
  for (std::size_t i = 0; i < num_modes; ++i) {
    for (std::size_t j = i + 1; j < num_modes; ++j) {
      const double v = mi_from_bins(binned[i], binned[j], bins);
      m[i * num_modes + j] = v;
      m[j * num_modes + i] = v;
    }
  }
  return m;
}

double mean_upper_triangle(std::span<const double> matrix, std::size_t num_modes) {
  if (num_modes < 2) fail(ErrorCode::KTooSmall, "MIC is undefined for K < 2");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < num_modes; ++i)
    for (std::size_t j = i + 1; j < num_modes; ++j) acc += matrix[i * num_modes + j];
  const auto k = static_cast<double>(num_modes);
  return 2.0 * acc / (k * (k - 1.0));
}

double mic(std::span<const double> modes, std::size_t num_modes, std::size_t length, int bins) {
  if (num_modes < 2) fail(ErrorCode::KTooSmall, "MIC is undefined for K < 2");
  return mean_upper_triangle(mi_matrix(modes, num_modes, length, bins), num_modes);
}

CriteriaReport evaluate(std::span<const double> modes, std::size_t num_modes, std::size_t length,
                        double alpha, int ar_order, int bins) {
  CriteriaReport rep;
  rep.K = static_cast<int>(num_modes);
  rep.alpha = alpha;
  const FicValue f = fic(modes, num_modes, length, ar_order, &rep.per_mode_sigma2);
  rep.fic = f.value;
  rep.fic_degenerate = f.all_degenerate;
  if (num_modes >= 2) {
    rep.mi_matrix = mi_matrix(modes, num_modes, length, bins);
    rep.mic = mean_upper_triangle(rep.mi_matrix, num_modes);
  } else {
    rep.mi_matrix.assign(num_modes * num_modes, 0.0);
  }
  return rep;
}

namespace {

void join(std::ostream& os, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

}  // namespace

std::string CriteriaReport::to_record() const {
  std::ostringstream os;
  os << std::setprecision(17) << "K=" << K << " alpha=" << alpha << " fic=" << fic
     << " fic_degenerate=" << (fic_degenerate ? 1 : 0) << " mic=" << mic << " sigma2=";
  join(os, per_mode_sigma2);
  os << " mi=";
  join(os, mi_matrix);
  return os.str();
}

CriteriaReport CriteriaReport::from_record(const std::string& line) {
  std::map<std::string, std::string> kv;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ParseError, "malformed criteria record: " + tok);
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorCode::ParseError, std::string("criteria record lacks ") + key);
    return it->second;
  };
  CriteriaReport r;
  try {
    r.K = std::stoi(need("K"));
    r.alpha = std::stod(need("alpha"));
    r.fic = std::stod(need("fic"));
    r.fic_degenerate = need("fic_degenerate") == "1";
    r.mic = std::stod(need("mic"));
    r.per_mode_sigma2 = split_doubles(need("sigma2"));
    r.mi_matrix = split_doubles(need("mi"));
  } catch (const std::logic_error& e) {
    fail(ErrorCode::ParseError, std::string("bad number in criteria record: ") + e.what());
  }
  return r;
}

}  // namespace vmdnet::criteria
