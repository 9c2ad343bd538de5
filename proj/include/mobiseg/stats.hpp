#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobiseg {

/// Values with positive frequency weights.
struct WeightedSample {
    std::vector<double> values;
    std::vector<double> weights;

    static WeightedSample unit(std::vector<double> values);
    void push(double value, double weight);
    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    double total_weight() const;
    /// Throws InputError on mismatched lengths or non-positive weights.
    void validate() const;
};

enum class Alternative { two_sided, less, greater };

double mean(std::span<const double> x);
/// Sample variance (n - 1 denominator).
double sample_variance(std::span<const double> x);
double median(std::vector<double> x);
/// Linear-interpolation percentile, q in [0, 100].
double percentile(std::vector<double> x, double q);
double percentile_sorted(std::span<const double> sorted, double q);

/// Lower weighted median; when the cumulative weight reaches exactly half of
/// the total, the midpoint of the two straddling values.
double weighted_median(const WeightedSample& s);
double weighted_mean(const WeightedSample& s);

struct BootstrapResult {
    double median = 0.0;
    double error = 0.0;
};

/// Resamples n values with probability proportional to weight, `reps` times;
/// error is the standard deviation of the resampled medians.
BootstrapResult weighted_bootstrap_median(const WeightedSample& s, int reps, std::uint64_t seed);

struct MannWhitneyResult {
    double u = 0.0;            ///< U statistic of the first sample
    double z = 0.0;
    double p = 1.0;
    double rank_biserial = 0.0; ///< 2U/(n1 n2) - 1, positive when `a` tends larger
    double median_diff = 0.0;   ///< weighted median(a) - weighted median(b)
};

/// Weights act as frequency mass: ranks are midranks of the expanded sample,
/// and the normal approximation uses the tie-corrected variance with a 0.5
/// continuity correction.
MannWhitneyResult weighted_mann_whitney_u(const WeightedSample& a, const WeightedSample& b,
                                          Alternative alt = Alternative::two_sided);

enum class EffectLabel { very_small, small, medium, large };

EffectLabel effect_label(double d);
std::string to_string(EffectLabel label);

struct EffectSize {
    double d = 0.0;
    EffectLabel label = EffectLabel::very_small;
};

/// (mean_a - mean_b) / pooled std; variances normalized by weight sums.
/// Empty when the pooled variance is zero.
std::optional<EffectSize> cohens_d(const WeightedSample& a, const WeightedSample& b);

/// One-sample t-test of mean against mu. A constant sample gives p = 1 when it
/// equals mu and 0 or 1 otherwise depending on the side.
double t_test_1samp(std::span<const double> x, double mu, Alternative alt);

/// Wilcoxon signed-rank test of x - mu; zero differences are dropped. Exact
/// distribution for n <= 50 without ties, otherwise the normal approximation.
double wilcoxon_1samp(std::span<const double> x, double mu, Alternative alt);

/// D'Agostino-Pearson omnibus p-value. Empty for n < 8 or zero variance.
std::optional<double> normality_p(std::span<const double> x);

struct OneSampleResult {
    double p = 1.0;
    bool used_t_test = false;
};

/// t-test when the normality test does not reject at `normal_alpha`, else
/// the signed-rank test.
OneSampleResult one_sample_test(std::span<const double> x, double threshold, Alternative alt,
                                double normal_alpha = 0.05);

struct Correlation {
    double pearson_r = 0.0;
    double pearson_p = 1.0;
    double spearman_rho = 0.0;
    double spearman_p = 1.0;
};

/// Weighted product-moment and rank correlations. Weights may be empty
/// (unit weights). p-values use the t distribution with n - 2 degrees of
/// freedom. Empty when either variable has zero variance.
std::optional<Correlation> correlations(std::span<const double> x, std::span<const double> y,
                                        std::span<const double> weights = {});

/// Midranks with weights as mass (ranks of the expanded sample averaged
/// within each tie group).
std::vector<double> weighted_midranks(std::span<const double> values, std::span<const double> weights);

double normal_sf(double z);
double normal_cdf(double z);

} // namespace mobiseg
