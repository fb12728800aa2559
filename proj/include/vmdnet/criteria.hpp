#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vmdnet::criteria {

struct ArFit {
  int order = 0;
  std::vector<double> coefficients;  // lag 1 first
  double intercept = 0.0;
  double residual_variance = 0.0;  // RSS / (T - r)
  std::size_t n_effective = 0;     // T - r
  bool degenerate = false;         // constant input: no usable design
};

/// Least-squares AR(r) with intercept, solved from the normal equations with a
/// relative ridge of 1e-12 on the diagonal. Throws TooShort unless
/// T - r >= r + 2 and NonFiniteInput on NaN/Inf.
ArFit fit_ar(std::span<const double> series, int order);

struct FicValue {
  double value = 0.0;
  /// True when every mode fit to zero residual variance; value is then -inf.
  bool all_degenerate = false;
};

/// (T - r) ln(sum_k sigma_k^2) + (K (r + 1) + 1) ln(T - r).
FicValue fic_from_variances(std::span<const double> sigma2, std::size_t length, int order);

/// FIC of a K x T row-major mode matrix. `per_mode_sigma2`, if given, receives
/// the K residual variances.
FicValue fic(std::span<const double> modes, std::size_t num_modes, std::size_t length, int order,
             std::vector<double>* per_mode_sigma2 = nullptr);

/// Plug-in mutual information (nats) from a bins x bins equal-width histogram
/// spanning each variable's own [min, max]. Symmetric bit-for-bit and >= 0.
/// Throws TooShort for T < 32 or mismatched lengths.
double mutual_information(std::span<const double> x, std::span<const double> y, int bins = 16);

/// Plug-in entropy (nats) of the same equal-width binning of one variable.
double binned_entropy(std::span<const double> x, int bins = 16);

/// K x K symmetric matrix with a zero diagonal.
std::vector<double> mi_matrix(std::span<const double> modes, std::size_t num_modes, std::size_t length,
                              int bins = 16);

/// Mean of the strict upper triangle of a K x K matrix.
double mean_upper_triangle(std::span<const double> matrix, std::size_t num_modes);

/// Average pairwise MI across modes; throws KTooSmall for K < 2.
double mic(std::span<const double> modes, std::size_t num_modes, std::size_t length, int bins = 16);

struct CriteriaReport {
  int K = 0;
  double alpha = 0.0;
  double fic = 0.0;
  bool fic_degenerate = false;
  double mic = 0.0;
  std::vector<double> per_mode_sigma2;
  std::vector<double> mi_matrix;  // K x K

  /// One-line key=value record, e.g. "K=3 alpha=2000 fic=... mic=... sigma2=a,b,c mi=..."
  std::string to_record() const;
  static CriteriaReport from_record(const std::string& line);
};

/// Full report for a K x T decomposition. MIC fields are left at zero for K = 1.
CriteriaReport evaluate(std::span<const double> modes, std::size_t num_modes, std::size_t length,
                        double alpha, int ar_order = 2, int bins = 16);

}  // namespace vmdnet::criteria
