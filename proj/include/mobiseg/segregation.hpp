#pragma once

#include "mobiseg/composition.hpp"
#include "mobiseg/geo_time.hpp"
#include "mobiseg/stays.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobiseg {

class Zoning;

/// National birth-background shares used to normalise ICE.
struct NationalShares {
    double native = 0.804;
    double foreign = 0.111;
    double other = 0.085;

    /// Each share in (0, 1) and the sum within 1e-9 of 1.
    void validate() const;
};

/// (N/wN - F/wF) / (N/wN + F/wF + O/wO); +1 means only native-born.
std::optional<double> ice_adjusted(const Composition& c, const NationalShares& s = {});
/// (N - F) / (N + F + O).
std::optional<double> ice_original(const Composition& c);

struct Thresholds {
    double lo = -0.2;
    double hi = 0.2;
};

/// F below lo, N above hi, otherwise M.
Group classify_residential(double ice_r, const Thresholds& t = {});

struct ExperiencedClass {
    Group group = Group::M;
    bool insufficient = false;
};

/// N when the sequence is significantly above hi, else F when significantly
/// below lo, else M. Fewer than `min_entries` values give M flagged as
/// insufficient.
ExperiencedClass classify_experienced(std::span<const double> sequence, const Thresholds& t = {},
                                      double alpha = 0.05, double normal_alpha = 0.05, std::size_t min_entries = 5);

/// One interval of presence in an analysis zone.
struct Visit {
    int zone = 0;
    Timestamp start = 0;
    Timestamp end = 0;
};

/// Days on which a device was present in (zone, temporal unit).
struct Presence {
    int zone = 0;
    int unit = 0;
    int days = 0;
    friend bool operator==(const Presence&, const Presence&) = default;
};

/// Presences of one device, counted once per local date, sorted by (zone, unit).
std::vector<Presence> presences(std::span<const Visit> visits, const HolidayCalendar& calendar,
                                const LocalClock& clock = {});

struct Visitor {
    double weight = 0.0;    ///< W_p
    Composition home_shares; ///< birth-background fractions of the home grid cell
    Group group = Group::M;  ///< residential group
    std::vector<Presence> presences;
};

/// Dense (zone, temporal unit) table of weighted compositions.
class UnitIndex {
  public:
    UnitIndex() = default;
    explicit UnitIndex(std::size_t zone_count) : zones_(zone_count), cells_(zone_count * kTemporalUnits) {}

    std::size_t zone_count() const { return zones_; }
    const Composition& at(int zone, int unit) const { return cells_[slot(zone, unit)]; }
    void add(int zone, int unit, const Composition& c) { cells_[slot(zone, unit)] += c; }

  private:
    std::size_t slot(int zone, int unit) const
    {
        return static_cast<std::size_t>(zone) * kTemporalUnits + static_cast<std::size_t>(unit);
    }
    std::size_t zones_ = 0;
    std::vector<Composition> cells_;
};

/// Visitor compositions: every presence adds weight x home shares x days.
UnitIndex build_visit_index(std::span<const Visitor> visitors, std::size_t zone_count);

/// Group masses with native = N, foreign = F, other = M.
Composition group_vector(Group g);
UnitIndex build_group_index(std::span<const Visitor> visitors, std::size_t zone_count);
/// Same with the groups and weights taken from the spans instead of the visitors.
UnitIndex build_group_index(std::span<const Visitor> visitors, std::size_t zone_count, std::span<const Group> groups,
                            std::span<const double> weights);

struct Experienced {
    /// ICE_e(i) for i = 1..48; NaN where the device has no routine presence.
    std::array<double, kIntervalsPerDay> sequence{};
    std::optional<double> ice_e;

    std::vector<double> defined() const;
};

/// Median of ICE_v over the distinct zones visited in each routine interval,
/// then the mean of the defined intervals.
Experienced experienced_ice(const Visitor& v, const UnitIndex& index, const NationalShares& s = {});

struct ExposureShares {
    double to_n = 0.0;
    double to_f = 0.0;
    double to_m = 0.0;

    double of(Group g) const { return g == Group::N ? to_n : g == Group::F ? to_f : to_m; }
};

/// Fraction of co-present weighted mass by residential group over the
/// device's routine presences, excluding its own contribution and weighting
/// each unit by the device's day count.
std::optional<ExposureShares> exposure_shares(const Visitor& v, const UnitIndex& groups);
std::optional<ExposureShares> exposure_shares(std::span<const Presence> presences, Group group, double weight,
                                              const UnitIndex& groups);

/// W_p-weighted group shares of the population.
ExposureShares random_mixing_baseline(std::span<const Visitor> visitors);

struct SegregationResult {
    std::vector<Experienced> experienced;
    std::vector<std::optional<ExposureShares>> exposure;
};

/// Builds both indices from the visitors and evaluates every visitor.
SegregationResult evaluate(std::span<const Visitor> visitors, std::size_t zone_count, const NationalShares& s = {},
                           bool with_exposure = true);

struct VisitorInputs {
    std::vector<Visitor> visitors; ///< aligned with the profiles
    std::size_t unlocated_stays = 0;
};

/// Non-home stays of each profile located in analysis zones. `stay_zone`
/// holds the analysis zone of every stay in `stays` (-1 when unlocated).
VisitorInputs make_visitors(const std::vector<IndividualProfile>& profiles, std::span<const double> weights,
                            const StaySet& stays, std::span<const int> stay_zone, const Zoning& zoning,
                            const HolidayCalendar& calendar, const LocalClock& clock = {});

/// Analysis zone of every stay centre, -1 when unlocated.
std::vector<int> locate_stays(const StaySet& stays, const Zoning& zoning);

} // namespace mobiseg
