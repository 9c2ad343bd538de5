#include "mobiseg/simulate.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/config.hpp"
#include "mobiseg/rng.hpp"
#include "mobiseg/stats.hpp"
#include "mobiseg/zoning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mobiseg {

namespace {

constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;
constexpr double kBucketM = 500.0;

enum Purpose : std::uint64_t { no_pref_purpose = 1, equalized_purpose = 2, residential_purpose = 3, exposure_purpose = 4 };

} // namespace

// ------------------------------------------------------------------ index

PoiIndex::PoiIndex(std::vector<PoiRecord> pois, std::size_t category_count, const Zoning* zoning)
    : pois_(std::move(pois)), category_count_(category_count)
{
    std::sort(pois_.begin(), pois_.end(), [](const PoiRecord& a, const PoiRecord& b) { return a.id < b.id; });
    for (const auto& p : pois_)
        if (p.category < 0 || static_cast<std::size_t>(p.category) >= category_count_)
            throw InputError("POI " + p.id + " has an unknown category");
    zones_.assign(pois_.size(), -1);
    if (zoning)
        parallel_for(pois_.size(), [&](std::size_t i) {
            if (auto z = zoning->analysis_zone(pois_[i].point))
                zones_[i] = *z;
        });
    if (pois_.empty())
        return;
    GeoPoint lo{90.0, 180.0};
    GeoPoint hi{-90.0, -180.0};
    for (const auto& p : pois_) {
        lo.lat = std::min(lo.lat, p.point.lat);
        lo.lon = std::min(lo.lon, p.point.lon);
        hi.lat = std::max(hi.lat, p.point.lat);
        hi.lon = std::max(hi.lon, p.point.lon);
    }
    origin_ = lo;
    step_lat_ = kBucketM / kMetersPerDegree;
    step_lon_ = step_lat_ / std::max(0.05, std::cos(std::max(std::abs(lo.lat), std::abs(hi.lat)) * std::numbers::pi / 180.0));
    n_lat_ = static_cast<int>((hi.lat - lo.lat) / step_lat_) + 1;
    n_lon_ = static_cast<int>((hi.lon - lo.lon) / step_lon_) + 1;
    buckets_.assign(static_cast<std::size_t>(n_lat_) * static_cast<std::size_t>(n_lon_), {});
    for (std::size_t i = 0; i < pois_.size(); ++i) {
        const int bi = std::min(n_lat_ - 1, static_cast<int>((pois_[i].point.lat - lo.lat) / step_lat_));
        const int bj = std::min(n_lon_ - 1, static_cast<int>((pois_[i].point.lon - lo.lon) / step_lon_));
        buckets_[static_cast<std::size_t>(bi) * static_cast<std::size_t>(n_lon_) + static_cast<std::size_t>(bj)]
            .push_back(static_cast<int>(i));
    }
}

template <class Fn>
void PoiIndex::scan(GeoPoint p, double radius_m, Fn&& fn) const
{
    if (pois_.empty())
        return;
    // Margins make the bucket range a superset of the exact disc.
    const double dlat = radius_m / kMetersPerDegree * 1.01 + 1e-9;
    const double coslat = std::cos(std::min(89.0, std::abs(p.lat) + dlat) * std::numbers::pi / 180.0);
    const double dlon = dlat / std::max(1e-3, coslat);
    const int i0 = std::max(0, static_cast<int>(std::floor((p.lat - dlat - origin_.lat) / step_lat_)));
    const int i1 = std::min(n_lat_ - 1, static_cast<int>(std::floor((p.lat + dlat - origin_.lat) / step_lat_)));
    const int j0 = std::max(0, static_cast<int>(std::floor((p.lon - dlon - origin_.lon) / step_lon_)));
    const int j1 = std::min(n_lon_ - 1, static_cast<int>(std::floor((p.lon + dlon - origin_.lon) / step_lon_)));
    for (int i = i0; i <= i1; ++i)
        for (int j = j0; j <= j1; ++j)
            for (int k : buckets_[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_lon_) +
                                  static_cast<std::size_t>(j)]) {
                const double d = haversine_m(p, pois_[static_cast<std::size_t>(k)].point);
                if (d <= radius_m)
                    fn(k, d);
            }
}

std::optional<int> PoiIndex::nearest(GeoPoint p, double radius_m) const
{
    int best = -1;
    double best_d = 0.0;
    scan(p, radius_m, [&](int k, double d) {
        if (best < 0 || d < best_d || (d == best_d && k < best)) {
            best = k;
            best_d = d;
        }
    });
    if (best < 0)
        return std::nullopt;
    return best;
}

std::optional<int> PoiIndex::nearest_brute_force(GeoPoint p, double radius_m) const
{
    int best = -1;
    double best_d = 0.0;
    for (int k = 0; k < static_cast<int>(pois_.size()); ++k) {
        const double d = haversine_m(p, pois_[static_cast<std::size_t>(k)].point);
        if (d <= radius_m && (best < 0 || d < best_d)) {
            best = k;
            best_d = d;
        }
    }
    if (best < 0)
        return std::nullopt;
    return best;
}

std::vector<int> PoiIndex::annulus(GeoPoint p, double inner_m, double outer_m, std::span<const int> categories) const
{
    std::vector<char> wanted(category_count_, 0);
    for (int c : categories)
        wanted[static_cast<std::size_t>(c)] = 1;
    std::vector<int> out;
    scan(p, outer_m, [&](int k, double d) {
        if (d >= inner_m && wanted[static_cast<std::size_t>(pois_[static_cast<std::size_t>(k)].category)])
            out.push_back(k);
    });
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> PoiIndex::annulus_brute_force(GeoPoint p, double inner_m, double outer_m,
                                               std::span<const int> categories) const
{
    std::vector<int> out;
    for (int k = 0; k < static_cast<int>(pois_.size()); ++k) {
        const auto& poi = pois_[static_cast<std::size_t>(k)];
        const double d = haversine_m(p, poi.point);
        if (d >= inner_m && d <= outer_m && std::find(categories.begin(), categories.end(), poi.category) != categories.end())
            out.push_back(k);
    }
    return out;
}

// ----------------------------------------------------------------- config

std::string to_string(SimKind k)
{
    switch (k) {
    case SimKind::residential_rand:
        return "residential-rand";
    case SimKind::no_pref:
        return "no-pref";
    case SimKind::equalized:
        return "equalized";
    }
    return "no-pref";
}

SimKind parse_sim_kind(std::string_view s)
{
    if (s == "residential-rand")
        return SimKind::residential_rand;
    if (s == "no-pref")
        return SimKind::no_pref;
    if (s == "equalized")
        return SimKind::equalized;
    throw InputError("unknown simulation kind '" + std::string(s) + "'");
}

SimConfig SimConfig::defaults(SimKind kind)
{
    SimConfig c;
    c.kind = kind;
    c.repetitions = kind == SimKind::residential_rand ? 100 : 50;
    return c;
}

SimConfig SimConfig::from_config(const Config& config, SimKind kind)
{
    SimConfig c = defaults(kind);
    const std::string reps_key = kind == SimKind::residential_rand ? "simulate.residential_reps"
                                 : kind == SimKind::no_pref        ? "simulate.no_pref_reps"
                                                                   : "simulate.equalized_reps";
    c.repetitions = static_cast<int>(config.get_int(reps_key, c.repetitions));
    c.seed = static_cast<std::uint64_t>(config.get_int("seed", static_cast<std::int64_t>(c.seed)));
    c.assign_radius_m = config.get_double("simulate.assign_radius", c.assign_radius_m);
    c.inner_m = config.get_double("simulate.inner_radius", c.inner_m);
    c.outer_m = config.get_double("simulate.outer_radius", c.outer_m);
    c.buffer_m = config.get_double("simulate.buffer", c.buffer_m);
    c.buffer_cap_m = config.get_double("simulate.buffer_cap", c.buffer_cap_m);
    c.validate();
    return c;
}

void SimConfig::validate() const
{
    if (repetitions < 1)
        throw InputError("simulation repetitions must be at least 1");
    if (!(inner_m >= 0.0 && inner_m < outer_m))
        throw InputError("simulation annulus needs 0 <= inner < outer");
    if (!(buffer_m > 0.0 && buffer_cap_m >= buffer_m))
        throw InputError("simulation buffer must be positive and not above its cap");
    if (!(assign_radius_m > 0.0))
        throw InputError("POI assignment radius must be positive");
}

std::vector<int> assign_stays_to_pois(const StaySet& stays, const PoiIndex& pois, double radius_m)
{
    std::vector<int> out(stays.stays.size(), -1);
    parallel_for(stays.stays.size(), [&](std::size_t i) {
        if (auto k = pois.nearest(stays.stays[i].center, radius_m))
            out[i] = *k;
    });
    return out;
}

// ------------------------------------------------------------ repetitions

namespace {

struct Relocation {
    int poi = -1;
    bool widened = false;
};

/// Runs `reps` repetitions. relocate(profile, stay, rep) gives the new POI of
/// a non-home stay with an assigned POI.
template <class Relocate>
SimResult run_repetitions(const SimInputs& in, int reps, Relocate&& relocate)
{
    const auto& profiles = *in.profiles;
    const StaySet& stays = *in.stays;
    const std::size_t zone_count = in.zoning->zones().size();
    SimResult out;
    out.repetitions = reps;
    std::vector<double> ice_sum(profiles.size(), 0.0);
    std::vector<int> ice_n(profiles.size(), 0);
    std::vector<Composition> exp_sum(profiles.size());
    std::vector<int> exp_n(profiles.size(), 0);
    std::vector<int> zones(in.stay_zone.begin(), in.stay_zone.end());
    struct Counts {
        std::size_t relocated = 0;
        std::size_t unmoved = 0;
        std::size_t widened = 0;
    };
    std::vector<Counts> counts(profiles.size());
    for (int rep = 0; rep < reps; ++rep) {
        parallel_for(profiles.size(), [&](std::size_t k) {
            const auto& p = profiles[k];
            const auto d = static_cast<std::size_t>(p.device);
            Counts& c = counts[k];
            for (std::size_t i = stays.offsets[d]; i < stays.offsets[d + 1]; ++i) {
                if (stays.stays[i].label == p.home_label)
                    continue;
                zones[i] = in.stay_zone[i];
                if (in.stay_poi[i] < 0) {
                    ++c.unmoved;
                    continue;
                }
                const Relocation r = relocate(k, i, rep);
                if (r.poi < 0) {
                    ++c.unmoved;
                    continue;
                }
                ++c.relocated;
                c.widened += r.widened;
                zones[i] = in.pois->zone(r.poi);
            }
        });
        const auto visitors =
            make_visitors(profiles, in.weights, stays, zones, *in.zoning, in.calendar, in.clock).visitors;
        const auto result = evaluate(visitors, zone_count, in.shares);
        for (std::size_t k = 0; k < profiles.size(); ++k) {
            if (result.experienced[k].ice_e) {
                ice_sum[k] += *result.experienced[k].ice_e;
                ++ice_n[k];
            }
            if (const auto& e = result.exposure[k]) {
                exp_sum[k] += Composition{e->to_n, e->to_f, e->to_m};
                ++exp_n[k];
            }
        }
    }
    out.ice_e.resize(profiles.size());
    out.exposure.resize(profiles.size());
    for (std::size_t k = 0; k < profiles.size(); ++k) {
        if (ice_n[k] > 0)
            out.ice_e[k] = ice_sum[k] / ice_n[k];
        if (exp_n[k] > 0) {
            const auto m = exp_sum[k].scaled(1.0 / exp_n[k]);
            out.exposure[k] = ExposureShares{m.native, m.foreign, m.other};
        }
        out.relocated += counts[k].relocated;
        out.unmoved += counts[k].unmoved;
        out.widened += counts[k].widened;
    }
    return out;
}

void check_inputs(const SimInputs& in)
{
    if (!in.profiles || !in.stays || !in.zoning || !in.pois || !in.categories)
        throw InvariantError("simulation inputs are incomplete");
    if (in.weights.size() != in.profiles->size() || in.stay_zone.size() != in.stays->stays.size() ||
        in.stay_poi.size() != in.stays->stays.size())
        throw InvariantError("simulation inputs are misaligned");
}

} // namespace

std::vector<int> no_pref_candidates(const PoiIndex& pois, const CategoryTable& categories, int poi, double inner_m,
                                    double outer_m)
{
    const auto& rec = pois.pois()[static_cast<std::size_t>(poi)];
    for (const auto& level : categories.ladder(rec.category)) {
        auto c = pois.annulus(rec.point, inner_m, outer_m, level);
        if (!c.empty())
            return c;
    }
    return {};
}

SimResult sim_no_preference(const SimInputs& in, const SimConfig& config)
{
    check_inputs(in);
    config.validate();
    // Candidate sets depend only on the assigned POI, so they are shared.
    std::vector<char> used(in.pois->pois().size(), 0);
    for (int p : in.stay_poi)
        if (p >= 0)
            used[static_cast<std::size_t>(p)] = 1;
    std::vector<std::vector<int>> candidates(in.pois->pois().size());
    parallel_for(candidates.size(), [&](std::size_t p) {
        if (used[p])
            candidates[p] = no_pref_candidates(*in.pois, *in.categories, static_cast<int>(p), config.inner_m,
                                               config.outer_m);
    });
    return run_repetitions(in, config.repetitions, [&](std::size_t k, std::size_t i, int rep) {
        const auto& c = candidates[static_cast<std::size_t>(in.stay_poi[i])];
        if (c.empty())
            return Relocation{};
        Stream rng(derive_key(config.seed, {no_pref_purpose, static_cast<std::uint64_t>((*in.profiles)[k].device),
                                            i, static_cast<std::uint64_t>(rep)}));
        return Relocation{c[rng.below(c.size())], false};
    });
}

// -------------------------------------------------------------- equalized

void DistanceDistribution::add(double distance_km, double weight)
{
    if (!(distance_km >= 0.0) || distance_km >= kBins || !(weight > 0.0))
        return;
    mass[static_cast<std::size_t>(distance_km)] += weight;
    total += weight;
}

std::vector<double> DistanceDistribution::frequencies() const
{
    std::vector<double> f(mass.size(), 0.0);
    if (total > 0.0)
        for (std::size_t i = 0; i < f.size(); ++i)
            f[i] = mass[i] / total;
    return f;
}

void DistanceDistribution::finalize()
{
    cumulative.resize(mass.size());
    double run = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        run += mass[i];
        cumulative[i] = run;
    }
}

double DistanceDistribution::sample(Stream& rng) const
{
    if (cumulative.size() != mass.size() || !(cumulative.back() > 0.0))
        throw InvariantError("distance distribution is empty or not finalized");
    const double u = rng.uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end())
        --it;
    // Skip empty bins that share the cumulative value.
    while (mass[static_cast<std::size_t>(it - cumulative.begin())] <= 0.0)
        ++it;
    const double bin = static_cast<double>(it - cumulative.begin());
    return bin + rng.uniform();
}

DistanceDistribution build_distance_distribution(const SimInputs& in)
{
    const auto& profiles = *in.profiles;
    const StaySet& stays = *in.stays;
    DistanceDistribution dist;
    for (std::size_t k = 0; k < profiles.size(); ++k) {
        const auto& p = profiles[k];
        const auto d = static_cast<std::size_t>(p.device);
        for (std::size_t i = stays.offsets[d]; i < stays.offsets[d + 1]; ++i) {
            const Stay& s = stays.stays[i];
            if (s.label == p.home_label)
                continue;
            dist.add(haversine_m(p.home_point, s.center) / 1000.0, in.weights[k] * s.weight);
        }
    }
    dist.finalize();
    return dist;
}

HomeLists home_lists(const PoiIndex& pois, GeoPoint home)
{
    const std::size_t nc = pois.category_count();
    HomeLists l;
    l.offsets.assign(nc + 1, 0);
    for (const auto& p : pois.pois())
        ++l.offsets[static_cast<std::size_t>(p.category) + 1];
    for (std::size_t c = 0; c < nc; ++c)
        l.offsets[c + 1] += l.offsets[c];
    l.distance.resize(pois.pois().size());
    l.poi.resize(pois.pois().size());
    struct Entry {
        float distance;
        std::uint32_t poi;
        bool operator<(const Entry& o) const { return distance != o.distance ? distance < o.distance : poi < o.poi; }
    };
    std::vector<Entry> entries(pois.pois().size());
    std::vector<std::uint32_t> fill(l.offsets.begin(), l.offsets.end() - 1);
    for (std::size_t k = 0; k < pois.pois().size(); ++k) {
        const auto c = static_cast<std::size_t>(pois.pois()[k].category);
        entries[fill[c]++] = {static_cast<float>(haversine_m(home, pois.pois()[k].point)), static_cast<std::uint32_t>(k)};
    }
    for (std::size_t c = 0; c < nc; ++c)
        std::sort(entries.begin() + l.offsets[c], entries.begin() + l.offsets[c + 1]);
    for (std::size_t k = 0; k < entries.size(); ++k) {
        l.distance[k] = entries[k].distance;
        l.poi[k] = entries[k].poi;
    }
    return l;
}

EqualizedPick equalized_pick(const HomeLists& lists, const CategoryTable& categories, int category, double d_m,
                             double buffer_m, double cap_m, Stream& rng)
{
    struct Range {
        std::uint32_t begin;
        std::uint32_t end;
    };
    std::vector<Range> ranges;
    for (double b = buffer_m;; b *= 2.0) {
        const bool last = b >= cap_m;
        if (last)
            b = cap_m;
        const auto lo = static_cast<float>(d_m - b);
        const auto hi = static_cast<float>(d_m + b);
        for (const auto& level : categories.ladder(category)) {
            ranges.clear();
            std::size_t count = 0;
            for (int c : level) {
                const auto first = lists.distance.begin() + lists.offsets[static_cast<std::size_t>(c)];
                const auto stop = lists.distance.begin() + lists.offsets[static_cast<std::size_t>(c) + 1];
                const auto a = std::lower_bound(first, stop, lo);
                const auto z = std::upper_bound(a, stop, hi);
                if (z > a) {
                    ranges.push_back({static_cast<std::uint32_t>(a - lists.distance.begin()),
                                      static_cast<std::uint32_t>(z - lists.distance.begin())});
                    count += static_cast<std::size_t>(z - a);
                }
            }
            if (count == 0)
                continue;
            std::size_t pick = rng.below(count);
            for (const auto& r : ranges) {
                const std::size_t n = r.end - r.begin;
                if (pick < n)
                    return {static_cast<int>(lists.poi[r.begin + pick]), b > buffer_m};
                pick -= n;
            }
        }
        if (last)
            return {};
    }
}

SimResult sim_equalized(const SimInputs& in, const SimConfig& config, const DistanceDistribution& dist)
{
    check_inputs(in);
    config.validate();
    if (!(dist.total > 0.0))
        throw InputError("equalized simulation needs a non-empty distance distribution");
    DistanceDistribution d = dist;
    d.finalize();
    const auto& profiles = *in.profiles;
    std::vector<HomeLists> lists(profiles.size());
    parallel_for(profiles.size(), [&](std::size_t k) { lists[k] = home_lists(*in.pois, profiles[k].home_point); });
    return run_repetitions(in, config.repetitions, [&](std::size_t k, std::size_t i, int rep) {
        Stream rng(derive_key(config.seed, {equalized_purpose, static_cast<std::uint64_t>(profiles[k].device), i,
                                            static_cast<std::uint64_t>(rep)}));
        const double distance_m = d.sample(rng) * 1000.0;
        const int category = in.pois->pois()[static_cast<std::size_t>(in.stay_poi[i])].category;
        const auto pick =
            equalized_pick(lists[k], *in.categories, category, distance_m, config.buffer_m, config.buffer_cap_m, rng);
        return Relocation{pick.poi, pick.widened};
    });
}

// ------------------------------------------------------------------ nulls

ResidentialNull sim_residential_randomization(const std::vector<IndividualProfile>& profiles,
                                              const std::vector<CensusZone>& census, int repetitions,
                                              std::uint64_t seed, const NationalShares& shares)
{
    if (repetitions < 1)
        throw InputError("residential randomization needs at least one repetition");
    if (profiles.size() < 2)
        throw InputError("residential randomization needs at least two individuals");
    std::vector<std::uint8_t> residents;
    std::vector<std::size_t> offsets{0};
    Composition total;
    for (const auto& z : census) {
        const auto n = static_cast<std::size_t>(std::llround(std::max(0.0, z.composition.native)));
        const auto f = static_cast<std::size_t>(std::llround(std::max(0.0, z.composition.foreign)));
        const auto o = static_cast<std::size_t>(std::llround(std::max(0.0, z.composition.other)));
        residents.insert(residents.end(), n, 0);
        residents.insert(residents.end(), f, 1);
        residents.insert(residents.end(), o, 2);
        offsets.push_back(residents.size());
        total += Composition{static_cast<double>(n), static_cast<double>(f), static_cast<double>(o)};
    }
    ResidentialNull out;
    out.analytic_mean = ice_adjusted(total, shares).value_or(0.0);
    std::vector<double> pooled;
    pooled.reserve(profiles.size() * static_cast<std::size_t>(repetitions));
    std::vector<std::optional<double>> zone_ice(census.size());
    for (int rep = 0; rep < repetitions; ++rep) {
        Stream rng(derive_key(seed, {residential_purpose, static_cast<std::uint64_t>(rep)}));
        shuffle(std::span<std::uint8_t>(residents), rng);
        for (std::size_t z = 0; z < census.size(); ++z) {
            Composition c;
            for (std::size_t k = offsets[z]; k < offsets[z + 1]; ++k)
                (residents[k] == 0 ? c.native : residents[k] == 1 ? c.foreign : c.other) += 1.0;
            zone_ice[z] = ice_adjusted(c, shares);
        }
        for (const auto& p : profiles)
            if (const auto& v = zone_ice[static_cast<std::size_t>(p.home_census_zone)])
                pooled.push_back(*v);
    }
    if (pooled.empty())
        throw InputError("residential randomization produced no defined ICE values");
    out.samples = pooled.size();
    out.mean = mean(pooled);
    std::sort(pooled.begin(), pooled.end());
    out.thresholds.lo = percentile_sorted(pooled, 0.5);
    out.thresholds.hi = percentile_sorted(pooled, 99.5);
    return out;
}

ExposureNull exposure_null(std::span<const Visitor> visitors, std::size_t zone_count, int repetitions,
                           std::uint64_t seed)
{
    if (repetitions < 1)
        throw InputError("exposure randomization needs at least one repetition");
    ExposureNull out;
    out.baseline = random_mixing_baseline(visitors);
    std::vector<double> dn;
    std::vector<double> df;
    std::vector<double> dm;
    std::vector<std::size_t> perm(visitors.size());
    std::vector<Group> groups(visitors.size());
    std::vector<double> weights(visitors.size());
    std::vector<std::optional<ExposureShares>> shares(visitors.size());
    for (int rep = 0; rep < repetitions; ++rep) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Stream rng(derive_key(seed, {exposure_purpose, static_cast<std::uint64_t>(rep)}));
        shuffle(std::span<std::size_t>(perm), rng);
        for (std::size_t k = 0; k < visitors.size(); ++k) {
            groups[k] = visitors[perm[k]].group;
            weights[k] = visitors[perm[k]].weight;
        }
        const UnitIndex index = build_group_index(visitors, zone_count, groups, weights);
        parallel_for(visitors.size(), [&](std::size_t k) {
            shares[k] = exposure_shares(visitors[k].presences, groups[k], weights[k], index);
        });
        for (const auto& s : shares)
            if (s) {
                dn.push_back(s->to_n - out.baseline.to_n);
                df.push_back(s->to_f - out.baseline.to_f);
                dm.push_back(s->to_m - out.baseline.to_m);
            }
    }
    if (dn.empty())
        throw InputError("exposure randomization found no encounters");
    out.lo = {percentile(dn, 2.5), percentile(df, 2.5), percentile(dm, 2.5)};
    out.hi = {percentile(dn, 97.5), percentile(df, 97.5), percentile(dm, 97.5)};
    return out;
}

} // namespace mobiseg
