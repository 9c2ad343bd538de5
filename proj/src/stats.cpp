#include "mobiseg/stats.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/rng.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mobiseg {

namespace {

std::vector<std::size_t> order_by_value(std::span<const double> v)
{
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return idx;
}

double student_sf(double t, double df)
{
    boost::math::students_t dist(df);
    return t >= 0 ? boost::math::cdf(boost::math::complement(dist, t)) : boost::math::cdf(dist, -t);
}

double side_p(double sf_upper, double cdf_lower, Alternative alt)
{
    switch (alt) {
    case Alternative::greater:
        return sf_upper;
    case Alternative::less:
        return cdf_lower;
    case Alternative::two_sided:
        break;
    }
    return std::min(1.0, 2.0 * std::min(sf_upper, cdf_lower));
}

struct Moments {
    double w = 0.0;
    double mean = 0.0;
    double var = 0.0; ///< weight-sum normalized
};

Moments weighted_moments(const WeightedSample& s)
{
    Moments m;
    for (std::size_t i = 0; i < s.size(); ++i) {
        m.w += s.weights[i];
        m.mean += s.weights[i] * s.values[i];
    }
    m.mean /= m.w;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s.values[i] - m.mean;
        m.var += s.weights[i] * d * d;
    }
    m.var /= m.w;
    return m;
}

std::optional<double> weighted_pearson(std::span<const double> x, std::span<const double> y,
                                       std::span<const double> w)
{
    double sw = 0.0;
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        mx += w[i] * x[i];
        my += w[i] * y[i];
    }
    mx /= sw;
    my /= sw;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += w[i] * dx * dx;
        syy += w[i] * dy * dy;
        sxy += w[i] * dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0)
        return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double correlation_p(double r, std::size_t n)
{
    if (n < 3)
        return 1.0;
    if (std::abs(r) >= 1.0)
        return 0.0;
    const double df = static_cast<double>(n - 2);
    const double t = r * std::sqrt(df / (1.0 - r * r));
    return std::min(1.0, 2.0 * student_sf(std::abs(t), df));
}

} // namespace

WeightedSample WeightedSample::unit(std::vector<double> values)
{
    WeightedSample s;
    s.weights.assign(values.size(), 1.0);
    s.values = std::move(values);
    return s;
}

void WeightedSample::push(double value, double weight)
{
    values.push_back(value);
    weights.push_back(weight);
}

double WeightedSample::total_weight() const
{
    double w = 0.0;
    for (double x : weights)
        w += x;
    return w;
}

void WeightedSample::validate() const
{
    if (values.size() != weights.size())
        throw InputError("weighted sample: values and weights differ in length");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw InputError("weighted sample: non-finite value");
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
            throw InputError("weighted sample: weights must be positive");
    }
}

double mean(std::span<const double> x)
{
    if (x.empty())
        throw InputError("mean of empty sequence");
    double s = 0.0;
    for (double v : x)
        s += v;
    return s / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x)
{
    if (x.size() < 2)
        throw InputError("variance needs at least two values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x)
        ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

double median(std::vector<double> x)
{
    return percentile(std::move(x), 50.0);
}

double percentile_sorted(std::span<const double> sorted, double q)
{
    if (sorted.empty())
        throw InputError("percentile of empty sequence");
    const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0)
        return sorted[lo];
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double percentile(std::vector<double> x, double q)
{
    std::sort(x.begin(), x.end());
    return percentile_sorted(x, q);
}

double weighted_median(const WeightedSample& s)
{
    s.validate();
    if (s.empty())
        throw InputError("weighted median of empty sample");
    const auto idx = order_by_value(s.values);
    const double half = s.total_weight() / 2.0;
    const double tol = 1e-12 * s.total_weight();
    double cum = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        cum += s.weights[idx[k]];
        if (std::abs(cum - half) <= tol && k + 1 < idx.size())
            return 0.5 * (s.values[idx[k]] + s.values[idx[k + 1]]);
        if (cum >= half)
            return s.values[idx[k]];
    }
    return s.values[idx.back()];
}

double weighted_mean(const WeightedSample& s)
{
    s.validate();
    if (s.empty())
        throw InputError("weighted mean of empty sample");
    return weighted_moments(s).mean;
}

BootstrapResult weighted_bootstrap_median(const WeightedSample& s, int reps, std::uint64_t seed)
{
    s.validate();
    if (s.empty())
        throw InputError("bootstrap of empty sample");
    if (reps < 1)
        throw InputError("bootstrap needs at least one repetition");
    BootstrapResult out;
    out.median = weighted_median(s);
    std::vector<double> cdf(s.size());
    double cum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        cum += s.weights[i];
        cdf[i] = cum;
    }
    const std::size_t n = s.size();
    // guide[j] is the first index whose cumulative weight exceeds j * cum / n,
    // so each draw resolves to the same index as a binary search.
    std::vector<std::size_t> guide(n + 1);
    for (std::size_t j = 0, i = 0; j <= n; ++j) {
        const double u = cum * static_cast<double>(j) / static_cast<double>(n);
        while (i + 1 < n && cdf[i] <= u)
            ++i;
        guide[j] = i;
    }
    const auto order = order_by_value(s.values);
    std::vector<std::size_t> rank(n);
    for (std::size_t r = 0; r < n; ++r)
        rank[order[r]] = r;
    const std::size_t lo = (n - 1) / 2;
    const std::size_t hi = n / 2;
    std::vector<double> medians(static_cast<std::size_t>(reps));
    std::vector<std::uint32_t> counts(n);
    for (int r = 0; r < reps; ++r) {
        Stream rng(derive_key(seed, {static_cast<std::uint64_t>(r)}));
        std::fill(counts.begin(), counts.end(), 0U);
        for (std::size_t k = 0; k < n; ++k) {
            const double u = rng.uniform() * cum;
            const auto j = std::min(n, static_cast<std::size_t>(u / cum * static_cast<double>(n)));
            std::size_t i = j == 0 ? 0 : guide[j - 1];
            while (i + 1 < n && cdf[i] <= u)
                ++i;
            ++counts[rank[i]];
        }
        // Order statistics lo and hi of the drawn sample.
        double a = 0.0;
        double b = 0.0;
        std::size_t seen = 0;
        for (std::size_t q = 0; q < n; ++q) {
            if (counts[q] == 0)
                continue;
            const std::size_t next = seen + counts[q];
            if (seen <= lo && lo < next)
                a = s.values[order[q]];
            if (seen <= hi && hi < next) {
                b = s.values[order[q]];
                break;
            }
            seen = next;
        }
        medians[static_cast<std::size_t>(r)] = lo == hi ? a : a + (b - a) * 0.5;
    }
    // Shift by the first value so a constant series gives exactly zero.
    const double shift = medians.front();
    double m = 0.0;
    for (double v : medians)
        m += v - shift;
    m /= static_cast<double>(reps);
    double ss = 0.0;
    for (double v : medians)
        ss += (v - shift - m) * (v - shift - m);
    out.error = std::sqrt(ss / static_cast<double>(reps));
    return out;
}

std::vector<double> weighted_midranks(std::span<const double> values, std::span<const double> weights)
{
    const auto idx = order_by_value(values);
    std::vector<double> ranks(values.size());
    double before = 0.0;
    for (std::size_t k = 0; k < idx.size();) {
        std::size_t e = k;
        double mass = 0.0;
        while (e < idx.size() && values[idx[e]] == values[idx[k]]) {
            mass += weights.empty() ? 1.0 : weights[idx[e]];
            ++e;
        }
        const double r = before + (mass + 1.0) / 2.0;
        for (std::size_t j = k; j < e; ++j)
            ranks[idx[j]] = r;
        before += mass;
        k = e;
    }
    return ranks;
}

MannWhitneyResult weighted_mann_whitney_u(const WeightedSample& a, const WeightedSample& b, Alternative alt)
{
    a.validate();
    b.validate();
    if (a.empty() || b.empty())
        throw InputError("Mann-Whitney U needs two nonempty samples");
    std::vector<double> values(a.values);
    values.insert(values.end(), b.values.begin(), b.values.end());
    std::vector<double> weights(a.weights);
    weights.insert(weights.end(), b.weights.begin(), b.weights.end());
    const auto ranks = weighted_midranks(values, weights);

    const double n1 = a.total_weight();
    const double n2 = b.total_weight();
    const double n = n1 + n2;
    double r1 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        r1 += a.weights[i] * ranks[i];

    const auto idx = order_by_value(values);
    double tie_term = 0.0;
    for (std::size_t k = 0; k < idx.size();) {
        std::size_t e = k;
        double mass = 0.0;
        while (e < idx.size() && values[idx[e]] == values[idx[k]]) {
            mass += weights[idx[e]];
            ++e;
        }
        tie_term += mass * mass * mass - mass;
        k = e;
    }

    MannWhitneyResult res;
    res.u = r1 - n1 * (n1 + 1.0) / 2.0;
    const double u2 = n1 * n2 - res.u;
    res.rank_biserial = 2.0 * res.u / (n1 * n2) - 1.0;
    res.median_diff = weighted_median(a) - weighted_median(b);

    const double mu = n1 * n2 / 2.0;
    const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (!(var > 0.0)) {
        res.p = 1.0;
        return res;
    }
    const double sd = std::sqrt(var);
    double u = res.u;
    double factor = 1.0;
    if (alt == Alternative::less)
        u = u2;
    else if (alt == Alternative::two_sided) {
        u = std::max(res.u, u2);
        factor = 2.0;
    }
    res.z = (u - mu - 0.5) / sd;
    res.p = std::clamp(factor * normal_sf(res.z), 0.0, 1.0);
    return res;
}

EffectLabel effect_label(double d)
{
    const double a = std::abs(d);
    if (a < 0.2)
        return EffectLabel::very_small;
    if (a < 0.5)
        return EffectLabel::small;
    if (a < 0.8)
        return EffectLabel::medium;
    return EffectLabel::large;
}

std::string to_string(EffectLabel label)
{
    switch (label) {
    case EffectLabel::very_small:
        return "Very small";
    case EffectLabel::small:
        return "Small";
    case EffectLabel::medium:
        return "Medium";
    case EffectLabel::large:
        return "Large";
    }
    return "";
}

std::optional<EffectSize> cohens_d(const WeightedSample& a, const WeightedSample& b)
{
    a.validate();
    b.validate();
    if (a.size() < 2 || b.size() < 2)
        throw InputError("Cohen's d needs at least two values per sample");
    const Moments ma = weighted_moments(a);
    const Moments mb = weighted_moments(b);
    const double pooled = (ma.w * ma.var + mb.w * mb.var) / (ma.w + mb.w);
    if (!(pooled > 0.0))
        return std::nullopt;
    EffectSize e;
    e.d = (ma.mean - mb.mean) / std::sqrt(pooled);
    e.label = effect_label(e.d);
    return e;
}

double t_test_1samp(std::span<const double> x, double mu, Alternative alt)
{
    if (x.size() < 2)
        throw InputError("t-test needs at least two values");
    const double m = mean(x);
    const double var = sample_variance(x);
    if (!(var > 0.0)) {
        if (m == mu)
            return 1.0;
        const bool above = m > mu;
        if (alt == Alternative::greater)
            return above ? 0.0 : 1.0;
        if (alt == Alternative::less)
            return above ? 1.0 : 0.0;
        return 0.0;
    }
    const double df = static_cast<double>(x.size() - 1);
    const double t = (m - mu) / std::sqrt(var / static_cast<double>(x.size()));
    const double upper = student_sf(t, df);
    return side_p(upper, student_sf(-t, df), alt);
}

double wilcoxon_1samp(std::span<const double> x, double mu, Alternative alt)
{
    std::vector<double> d;
    d.reserve(x.size());
    for (double v : x)
        if (v - mu != 0.0)
            d.push_back(v - mu);
    const std::size_t n = d.size();
    if (n == 0)
        return 1.0;
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i)
        mag[i] = std::abs(d[i]);
    const auto ranks = weighted_midranks(mag, {});
    double r_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (d[i] > 0.0)
            r_plus += ranks[i];

    std::vector<double> sorted(mag);
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    bool ties = false;
    for (std::size_t k = 0; k < n;) {
        std::size_t e = k;
        while (e < n && sorted[e] == sorted[k])
            ++e;
        const double t = static_cast<double>(e - k);
        if (e - k > 1)
            ties = true;
        tie_term += t * t * t - t;
        k = e;
    }

    const bool had_zeros = n != x.size();
    if (n <= 50 && !ties && !had_zeros) {
        // Exact null distribution of R+ by counting sign assignments.
        const std::size_t max_sum = n * (n + 1) / 2;
        std::vector<double> count(max_sum + 1, 0.0);
        count[0] = 1.0;
        for (std::size_t k = 1; k <= n; ++k)
            for (std::size_t s = max_sum; s >= k; --s)
                count[s] += count[s - k];
        const double total = std::ldexp(1.0, static_cast<int>(n));
        const auto r = static_cast<std::size_t>(std::llround(r_plus));
        double ge = 0.0;
        double le = 0.0;
        for (std::size_t s = 0; s <= max_sum; ++s) {
            if (s >= r)
                ge += count[s];
            if (s <= r)
                le += count[s];
        }
        return side_p(ge / total, le / total, alt);
    }
    const double nn = static_cast<double>(n);
    const double mn = nn * (nn + 1.0) / 4.0;
    const double se = std::sqrt((nn * (nn + 1.0) * (2.0 * nn + 1.0) - tie_term / 2.0) / 24.0);
    if (!(se > 0.0))
        return 1.0;
    const double z = (r_plus - mn) / se;
    return side_p(normal_sf(z), normal_cdf(z), alt);
}

std::optional<double> normality_p(std::span<const double> x)
{
    const std::size_t count = x.size();
    if (count < 8)
        return std::nullopt;
    const double n = static_cast<double>(count);
    const double m = mean(x);
    double m2 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
    for (double v : x) {
        const double d = v - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 0.0) || m2 <= 1e-28 * (m * m))
        return std::nullopt;

    // Skewness test.
    const double b1 = m3 / std::pow(m2, 1.5);
    double y = b1 * std::sqrt((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0)));
    const double beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) /
                         ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    const double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
    const double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
    const double alpha = std::sqrt(2.0 / (w2 - 1.0));
    if (y == 0.0)
        y = 1.0;
    const double zs = delta * std::log(y / alpha + std::sqrt((y / alpha) * (y / alpha) + 1.0));

    // Kurtosis test.
    const double b2 = m4 / (m2 * m2);
    const double e = 3.0 * (n - 1.0) / (n + 1.0);
    const double varb2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    const double xk = (b2 - e) / std::sqrt(varb2);
    const double sqrtbeta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0)) *
                             std::sqrt(6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0)));
    const double a = 6.0 + 8.0 / sqrtbeta1 * (2.0 / sqrtbeta1 + std::sqrt(1.0 + 4.0 / (sqrtbeta1 * sqrtbeta1)));
    const double term1 = 1.0 - 2.0 / (9.0 * a);
    const double denom = 1.0 + xk * std::sqrt(2.0 / (a - 4.0));
    if (denom == 0.0)
        return std::nullopt;
    const double term2 = (denom > 0 ? 1.0 : -1.0) * std::cbrt((1.0 - 2.0 / a) / std::abs(denom));
    const double zk = (term1 - term2) / std::sqrt(2.0 / (9.0 * a));

    const double k2 = zs * zs + zk * zk;
    return std::exp(-k2 / 2.0); // chi-square survival with 2 degrees of freedom
}

OneSampleResult one_sample_test(std::span<const double> x, double threshold, Alternative alt, double normal_alpha)
{
    OneSampleResult r;
    const auto np = normality_p(x);
    if (np && *np >= normal_alpha) {
        r.used_t_test = true;
        r.p = t_test_1samp(x, threshold, alt);
    } else {
        r.p = wilcoxon_1samp(x, threshold, alt);
    }
    return r;
}

std::optional<Correlation> correlations(std::span<const double> x, std::span<const double> y,
                                        std::span<const double> weights)
{
    if (x.size() != y.size() || (!weights.empty() && weights.size() != x.size()))
        throw InputError("correlation inputs differ in length");
    if (x.size() < 3)
        throw InputError("correlation needs at least three pairs");
    std::vector<double> w(weights.begin(), weights.end());
    if (w.empty())
        w.assign(x.size(), 1.0);
    const auto r = weighted_pearson(x, y, w);
    const auto rx = weighted_midranks(x, w);
    const auto ry = weighted_midranks(y, w);
    const auto rho = weighted_pearson(rx, ry, w);
    if (!r || !rho)
        return std::nullopt;
    Correlation c;
    c.pearson_r = *r;
    c.spearman_rho = *rho;
    c.pearson_p = correlation_p(*r, x.size());
    c.spearman_p = correlation_p(*rho, x.size());
    return c;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

} // namespace mobiseg
