#pragma once

#include "mobiseg/formats.hpp"
#include "mobiseg/segregation.hpp"
#include "mobiseg/stays.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobiseg {

class Config;
class Zoning;
class Stream;

/// POIs sorted by id with their analysis zones, bucketed for radius queries.
class PoiIndex {
  public:
    PoiIndex() = default;
    /// Zones are looked up in `zoning` when given, otherwise all -1.
    PoiIndex(std::vector<PoiRecord> pois, std::size_t category_count, const Zoning* zoning = nullptr);

    const std::vector<PoiRecord>& pois() const { return pois_; }
    int zone(int poi) const { return zones_[static_cast<std::size_t>(poi)]; }
    std::size_t category_count() const { return category_count_; }

    /// Closest POI within `radius_m` (inclusive); ties go to the lower index.
    std::optional<int> nearest(GeoPoint p, double radius_m) const;
    std::optional<int> nearest_brute_force(GeoPoint p, double radius_m) const;
    /// POIs of the given categories with inner <= distance <= outer, in index order.
    std::vector<int> annulus(GeoPoint p, double inner_m, double outer_m, std::span<const int> categories) const;
    std::vector<int> annulus_brute_force(GeoPoint p, double inner_m, double outer_m,
                                         std::span<const int> categories) const;

  private:
    template <class Fn>
    void scan(GeoPoint p, double radius_m, Fn&& fn) const;

    std::vector<PoiRecord> pois_;
    std::vector<int> zones_;
    std::size_t category_count_ = 0;
    GeoPoint origin_;
    double step_lat_ = 1.0;
    double step_lon_ = 1.0;
    int n_lat_ = 0;
    int n_lon_ = 0;
    std::vector<std::vector<int>> buckets_;
};

enum class SimKind { residential_rand, no_pref, equalized };
std::string to_string(SimKind k);
SimKind parse_sim_kind(std::string_view s);

struct SimConfig {
    SimKind kind = SimKind::no_pref;
    int repetitions = 50;
    std::uint64_t seed = 1;
    double assign_radius_m = 300.0;
    double inner_m = 30.0;
    double outer_m = 1000.0;
    double buffer_m = 30.0;
    double buffer_cap_m = 960.0;

    /// Defaults for `kind` (100 repetitions for residential randomization).
    static SimConfig defaults(SimKind kind);
    /// Reads [simulate] keys; `kind` selects the per-kind repetition key.
    static SimConfig from_config(const Config& config, SimKind kind);
    void validate() const;
};

/// Everything a counterfactual needs; all spans are borrowed.
struct SimInputs {
    const std::vector<IndividualProfile>* profiles = nullptr;
    std::span<const double> weights; ///< W_p per profile
    const StaySet* stays = nullptr;
    std::span<const int> stay_zone; ///< analysis zone per stay, -1 when unlocated
    std::span<const int> stay_poi;  ///< assigned POI per stay, -1 when none
    const Zoning* zoning = nullptr;
    const PoiIndex* pois = nullptr;
    const CategoryTable* categories = nullptr;
    HolidayCalendar calendar;
    LocalClock clock;
    NationalShares shares;
};

/// Nearest POI within the radius for every stay (-1 when none).
std::vector<int> assign_stays_to_pois(const StaySet& stays, const PoiIndex& pois, double radius_m = 300.0);

struct SimResult {
    std::vector<std::optional<double>> ice_e; ///< per profile, mean over repetitions
    std::vector<std::optional<ExposureShares>> exposure;
    std::size_t relocated = 0; ///< stay relocations summed over repetitions
    std::size_t unmoved = 0;   ///< non-home stays left in place
    std::size_t widened = 0;   ///< equalized relocations that needed a wider buffer
    int repetitions = 0;
};

/// Candidates for the no-preference shift of a stay at `poi`: POIs in the
/// annulus around it at the first non-empty level of its category ladder.
std::vector<int> no_pref_candidates(const PoiIndex& pois, const CategoryTable& categories, int poi, double inner_m,
                                    double outer_m);

SimResult sim_no_preference(const SimInputs& in, const SimConfig& config);

/// Visit frequencies in 1 km bins over [0, 1500) km.
struct DistanceDistribution {
    static constexpr int kBins = 1500;
    std::vector<double> mass = std::vector<double>(kBins, 0.0);
    double total = 0.0;

    void add(double distance_km, double weight);
    /// Normalised frequencies (all zero when empty).
    std::vector<double> frequencies() const;
    /// Draws a bin by mass, then a distance (km) uniformly inside it.
    double sample(Stream& rng) const;
    /// Builds the cumulative table used by sample(); call after the last add().
    void finalize();
    std::vector<double> cumulative;
};

/// Home-to-stay distances of all non-home stays weighted by W_p x stay weight.
DistanceDistribution build_distance_distribution(const SimInputs& in);

/// Relocates one stay for the equalized scenario. `sorted` lists the POIs of
/// each category by distance from home; returns the POI or -1.
struct HomeLists {
    std::vector<std::uint32_t> offsets; ///< per category, size categories + 1
    std::vector<float> distance;        ///< meters
    std::vector<std::uint32_t> poi;
};
HomeLists home_lists(const PoiIndex& pois, GeoPoint home);
struct EqualizedPick {
    int poi = -1;
    bool widened = false;
};
EqualizedPick equalized_pick(const HomeLists& lists, const CategoryTable& categories, int category, double d_m,
                             double buffer_m, double cap_m, Stream& rng);

SimResult sim_equalized(const SimInputs& in, const SimConfig& config, const DistanceDistribution& dist);

struct ResidentialNull {
    Thresholds thresholds;
    double mean = 0.0;          ///< mean of the pooled null ICE_r values
    double analytic_mean = 0.0; ///< ICE of the total census composition
    std::size_t samples = 0;
};

/// Shuffles census residents across all residence slots each repetition and
/// pools the ICE of every profile's home zone. Thresholds are the 0.5 and
/// 99.5 percentiles.
ResidentialNull sim_residential_randomization(const std::vector<IndividualProfile>& profiles,
                                              const std::vector<CensusZone>& census, int repetitions,
                                              std::uint64_t seed, const NationalShares& shares = {});

struct ExposureNull {
    ExposureShares baseline;
    ExposureShares lo; ///< 2.5th percentile of deviations per target group
    ExposureShares hi; ///< 97.5th percentile
};

/// Permutes (group, weight) pairs across visitors and pools the deviations of
/// their exposure shares from the baseline.
ExposureNull exposure_null(std::span<const Visitor> visitors, std::size_t zone_count, int repetitions,
                           std::uint64_t seed);

} // namespace mobiseg
