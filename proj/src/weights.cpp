#include "mobiseg/weights.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/csv.hpp"
#include "mobiseg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace mobiseg {

IntervalHistogram interval_histogram(std::span<const Fix> fixes, const LocalClock& clock)
{
    IntervalHistogram h{};
    for (const auto& f : fixes)
        ++h[static_cast<std::size_t>(interval_of(clock.seconds_of_day(f.t)).value - 1)];
    return h;
}

double stay_weight(Timestamp start, Timestamp end, const IntervalHistogram& f, const LocalClock& clock)
{
    double w = 0.0;
    for (const auto& piece : split_at_local_midnight(start, end, clock))
        for (const auto i : intervals_spanned(piece.start, piece.end, clock)) {
            const auto count = f[static_cast<std::size_t>(i.value - 1)];
            if (count > 0)
                w += 1.0 / static_cast<double>(count);
        }
    return w;
}

std::size_t assign_stay_weights(StaySet& stays, const FixSet& fixes, const LocalClock& clock)
{
    std::unordered_map<std::string_view, std::size_t> fix_index;
    for (std::size_t i = 0; i < fixes.device_count(); ++i)
        fix_index.emplace(fixes.device_ids[i], i);
    std::vector<char> gaps(stays.device_count(), 0);
    parallel_for(stays.device_count(), [&](std::size_t d) {
        auto it = fix_index.find(stays.device_ids[d]);
        auto ds = stays.device(d);
        if (it == fix_index.end()) {
            for (auto& s : ds)
                s.weight = 0.0;
            return;
        }
        const auto hist = interval_histogram(fixes.device(it->second), clock);
        for (auto& s : ds) {
            s.weight = stay_weight(s.start, s.end, hist, clock);
            for (const auto& piece : split_at_local_midnight(s.start, s.end, clock))
                for (const auto i : intervals_spanned(piece.start, piece.end, clock))
                    if (hist[static_cast<std::size_t>(i.value - 1)] == 0)
                        gaps[d] = 1;
        }
    });
    return static_cast<std::size_t>(std::count(gaps.begin(), gaps.end(), 1));
}

double trim_cutpoint(std::span<const double> weights)
{
    std::vector<double> w;
    for (double x : weights)
        if (x > 0.0)
            w.push_back(x);
    if (w.empty())
        return 0.0;
    const double n = static_cast<double>(w.size());
    double mean = 0.0;
    for (double x : w)
        mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : w)
        ss += (x - mean) * (x - mean);
    const double cv = std::sqrt(ss / n) / mean;
    return 3.5 * std::sqrt(1.0 + cv * cv) * median(w);
}

void trim_weights(std::span<double> weights, double w0)
{
    for (double& x : weights)
        x = std::min(x, w0);
}

PopulationWeights population_weights(const std::vector<IndividualProfile>& profiles,
                                     const std::vector<CensusZone>& census)
{
    std::vector<std::int64_t> devices(census.size(), 0);
    for (const auto& p : profiles)
        ++devices.at(static_cast<std::size_t>(p.home_census_zone));
    PopulationWeights out;
    out.raw.reserve(profiles.size());
    std::size_t empty_zones = 0;
    for (std::size_t z = 0; z < census.size(); ++z)
        if (devices[z] > 0 && census[z].population <= 0)
            ++empty_zones;
    if (empty_zones > 0)
        warn(std::to_string(empty_zones) + " home zones have devices but no population; their weights are 0");
    for (const auto& p : profiles) {
        const auto z = static_cast<std::size_t>(p.home_census_zone);
        const double pop = static_cast<double>(std::max<std::int64_t>(census[z].population, 0));
        out.raw.push_back(pop / static_cast<double>(devices[z]));
    }
    out.cutpoint = trim_cutpoint(out.raw);
    out.trimmed = out.raw;
    trim_weights(out.trimmed, out.cutpoint);
    return out;
}

void write_population_weights(const std::vector<IndividualProfile>& profiles, const PopulationWeights& w,
                              const StaySet& stays, const std::vector<CensusZone>& census, const std::string& path)
{
    CsvWriter out(path);
    out.header({"device_id", "home_zone", "raw_weight", "weight"});
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        out.text(stays.device_ids[static_cast<std::size_t>(profiles[i].device)]);
        out.text(census[static_cast<std::size_t>(profiles[i].home_census_zone)].id);
        out.exact(w.raw[i]).exact(w.trimmed[i]);
        out.end_row();
    }
    out.close();
}

std::vector<double> read_population_weights(const std::string& path, const std::vector<IndividualProfile>& profiles,
                                            const StaySet& stays)
{
    CsvReader r(path);
    const auto c_id = r.require("device_id");
    const auto c_w = r.require("weight");
    std::unordered_map<std::string, double> by_id;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        const auto w = f.size() == r.header().size() ? parse_double(f[c_w]) : std::nullopt;
        if (!w || *w < 0.0)
            throw InputError(path + ":" + std::to_string(r.line_number()) + ": malformed weight");
        by_id[std::string(f[c_id])] = *w;
    }
    std::vector<double> out;
    out.reserve(profiles.size());
    for (const auto& p : profiles) {
        const auto& id = stays.device_ids[static_cast<std::size_t>(p.device)];
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw InputError(path + ": no weight for device " + id);
        out.push_back(it->second);
    }
    return out;
}

} // namespace mobiseg
