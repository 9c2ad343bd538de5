#include "mobiseg/segregation.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/stats.hpp"
#include "mobiseg/zoning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mobiseg {

void NationalShares::validate() const
{
    for (double v : {native, foreign, other})
        if (!(v > 0.0 && v < 1.0))
            throw InputError("national shares must lie in (0, 1)");
    if (std::abs(native + foreign + other - 1.0) > 1e-9)
        throw InputError("national shares must sum to 1");
}

std::optional<double> ice_adjusted(const Composition& c, const NationalShares& s)
{
    // Scaled by wN * wF so that counts in national proportions cancel exactly.
    const double n = c.native * s.foreign;
    const double f = c.foreign * s.native;
    const double den = n + f + c.other * (s.native * s.foreign / s.other);
    if (!(den > 0.0))
        return std::nullopt;
    return (n - f) / den;
}

std::optional<double> ice_original(const Composition& c)
{
    const double den = c.total();
    if (!(den > 0.0))
        return std::nullopt;
    return (c.native - c.foreign) / den;
}

Group classify_residential(double ice_r, const Thresholds& t)
{
    if (ice_r < t.lo)
        return Group::F;
    if (ice_r > t.hi)
        return Group::N;
    return Group::M;
}

ExperiencedClass classify_experienced(std::span<const double> sequence, const Thresholds& t, double alpha,
                                      double normal_alpha, std::size_t min_entries)
{
    if (sequence.size() < min_entries)
        return {Group::M, true};
    if (one_sample_test(sequence, t.hi, Alternative::greater, normal_alpha).p < alpha)
        return {Group::N, false};
    if (one_sample_test(sequence, t.lo, Alternative::less, normal_alpha).p < alpha)
        return {Group::F, false};
    return {Group::M, false};
}

std::vector<Presence> presences(std::span<const Visit> visits, const HolidayCalendar& calendar,
                                const LocalClock& clock)
{
    struct Key {
        int zone;
        int unit;
        int date;
        auto operator<=>(const Key&) const = default;
    };
    std::vector<Key> keys;
    for (const auto& v : visits)
        for (const auto& piece : split_at_local_midnight(v.start, v.end, clock)) {
            const DayType dt = day_type(piece.date, calendar);
            const int date = static_cast<int>(piece.date.time_since_epoch().count());
            for (const auto i : intervals_spanned(piece.start, piece.end, clock))
                keys.push_back({v.zone, temporal_unit(i, dt), date});
        }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    std::vector<Presence> out;
    for (const auto& k : keys) {
        if (!out.empty() && out.back().zone == k.zone && out.back().unit == k.unit)
            ++out.back().days;
        else
            out.push_back({k.zone, k.unit, 1});
    }
    return out;
}

UnitIndex build_visit_index(std::span<const Visitor> visitors, std::size_t zone_count)
{
    UnitIndex index(zone_count);
    for (const auto& v : visitors) {
        const Composition unit_mass = v.home_shares.scaled(v.weight);
        for (const auto& p : v.presences)
            index.add(p.zone, p.unit, unit_mass.scaled(static_cast<double>(p.days)));
    }
    return index;
}

Composition group_vector(Group g)
{
    switch (g) {
    case Group::N:
        return {1.0, 0.0, 0.0};
    case Group::F:
        return {0.0, 1.0, 0.0};
    case Group::M:
        return {0.0, 0.0, 1.0};
    }
    return {};
}

UnitIndex build_group_index(std::span<const Visitor> visitors, std::size_t zone_count, std::span<const Group> groups,
                            std::span<const double> weights)
{
    UnitIndex index(zone_count);
    for (std::size_t k = 0; k < visitors.size(); ++k) {
        const Composition unit_mass = group_vector(groups[k]).scaled(weights[k]);
        for (const auto& p : visitors[k].presences)
            if (is_routine_unit(p.unit))
                index.add(p.zone, p.unit, unit_mass.scaled(static_cast<double>(p.days)));
    }
    return index;
}

UnitIndex build_group_index(std::span<const Visitor> visitors, std::size_t zone_count)
{
    std::vector<Group> groups;
    std::vector<double> weights;
    for (const auto& v : visitors) {
        groups.push_back(v.group);
        weights.push_back(v.weight);
    }
    return build_group_index(visitors, zone_count, groups, weights);
}

std::vector<double> Experienced::defined() const
{
    std::vector<double> out;
    for (double x : sequence)
        if (!std::isnan(x))
            out.push_back(x);
    return out;
}

Experienced experienced_ice(const Visitor& v, const UnitIndex& index, const NationalShares& s)
{
    Experienced e;
    e.sequence.fill(std::numeric_limits<double>::quiet_NaN());
    std::array<std::vector<double>, kIntervalsPerDay> values;
    // Presences are unique per (zone, unit), so each zone enters an interval once.
    for (const auto& p : v.presences) {
        if (!is_routine_unit(p.unit))
            continue;
        if (auto ice = ice_adjusted(index.at(p.zone, p.unit), s))
            values[static_cast<std::size_t>(unit_interval(p.unit).value - 1)].push_back(*ice);
    }
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].empty())
            continue;
        e.sequence[i] = median(values[i]);
        sum += e.sequence[i];
        ++count;
    }
    if (count > 0)
        e.ice_e = sum / count;
    return e;
}

std::optional<ExposureShares> exposure_shares(const Visitor& v, const UnitIndex& groups)
{
    return exposure_shares(v.presences, v.group, v.weight, groups);
}

std::optional<ExposureShares> exposure_shares(std::span<const Presence> presences, Group group, double weight,
                                              const UnitIndex& groups)
{
    const Composition own = group_vector(group).scaled(weight);
    Composition total;
    for (const auto& p : presences) {
        if (!is_routine_unit(p.unit))
            continue;
        const double days = static_cast<double>(p.days);
        const Composition& cell = groups.at(p.zone, p.unit);
        Composition others{std::max(0.0, cell.native - own.native * days),
                           std::max(0.0, cell.foreign - own.foreign * days),
                           std::max(0.0, cell.other - own.other * days)};
        total += others.scaled(days);
    }
    const double mass = total.total();
    if (!(mass > 0.0))
        return std::nullopt;
    return ExposureShares{total.native / mass, total.foreign / mass, total.other / mass};
}

ExposureShares random_mixing_baseline(std::span<const Visitor> visitors)
{
    Composition c;
    for (const auto& v : visitors)
        c += group_vector(v.group).scaled(v.weight);
    const auto s = c.shares();
    return {s.native, s.foreign, s.other};
}

SegregationResult evaluate(std::span<const Visitor> visitors, std::size_t zone_count, const NationalShares& s,
                           bool with_exposure)
{
    SegregationResult out;
    const UnitIndex index = build_visit_index(visitors, zone_count);
    out.experienced.resize(visitors.size());
    parallel_for(visitors.size(), [&](std::size_t i) { out.experienced[i] = experienced_ice(visitors[i], index, s); });
    if (with_exposure) {
        const UnitIndex groups = build_group_index(visitors, zone_count);
        out.exposure.resize(visitors.size());
        parallel_for(visitors.size(), [&](std::size_t i) { out.exposure[i] = exposure_shares(visitors[i], groups); });
    }
    return out;
}

std::vector<int> locate_stays(const StaySet& stays, const Zoning& zoning)
{
    std::vector<int> out(stays.stays.size(), -1);
    parallel_for(stays.stays.size(), [&](std::size_t i) {
        if (auto z = zoning.analysis_zone(stays.stays[i].center))
            out[i] = *z;
    });
    return out;
}

VisitorInputs make_visitors(const std::vector<IndividualProfile>& profiles, std::span<const double> weights,
                            const StaySet& stays, std::span<const int> stay_zone, const Zoning& zoning,
                            const HolidayCalendar& calendar, const LocalClock& clock)
{
    if (weights.size() != profiles.size())
        throw InvariantError("make_visitors: one weight per profile expected");
    if (stay_zone.size() != stays.stays.size())
        throw InvariantError("make_visitors: one zone per stay expected");
    VisitorInputs out;
    out.visitors.resize(profiles.size());
    std::vector<std::size_t> unlocated(profiles.size(), 0);
    parallel_for(profiles.size(), [&](std::size_t k) {
        const auto& p = profiles[k];
        Visitor& v = out.visitors[k];
        v.weight = weights[k];
        v.group = p.group;
        v.home_shares = zoning.cells()[static_cast<std::size_t>(p.home_cell)].composition.shares();
        const auto d = static_cast<std::size_t>(p.device);
        std::vector<Visit> visits;
        for (std::size_t i = stays.offsets[d]; i < stays.offsets[d + 1]; ++i) {
            const Stay& s = stays.stays[i];
            if (s.label == p.home_label)
                continue;
            if (stay_zone[i] < 0) {
                ++unlocated[k];
                continue;
            }
            visits.push_back({stay_zone[i], s.start, s.end});
        }
        v.presences = presences(visits, calendar, clock);
    });
    for (auto u : unlocated)
        out.unlocated_stays += u;
    return out;
}

} // namespace mobiseg
