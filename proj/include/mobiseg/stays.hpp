#pragma once

#include "mobiseg/formats.hpp"
#include "mobiseg/geo_time.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobiseg {

class Config;
class Zoning;

struct StayParams {
    double r1_m = 30.0;
    double r2_m = 30.0;
    double t_min_minutes = 15.0;
    double t_max_hours = 3.0;
    /// Stays longer than this are dropped before clustering.
    double max_duration_hours = 12.0;

    /// Throws InputError unless all values are positive, r1, r2 <= 1000 m and
    /// t_min < 12 h.
    void validate() const;
    Timestamp t_min_s() const { return static_cast<Timestamp>(t_min_minutes * 60.0); }
    Timestamp t_max_s() const { return static_cast<Timestamp>(t_max_hours * 3600.0); }
    Timestamp max_duration_s() const { return static_cast<Timestamp>(max_duration_hours * 3600.0); }

    /// Reads the [stays] table; missing keys keep their defaults.
    static StayParams from_config(const Config& config);
};

struct Stay {
    int device = 0; ///< index into StaySet::device_ids
    int label = 0;  ///< destination id, unique within the device
    GeoPoint center;
    Timestamp start = 0;
    Timestamp end = 0;
    double weight = 0.0;

    double duration_minutes() const { return static_cast<double>(end - start) / 60.0; }
    friend bool operator==(const Stay&, const Stay&) = default;
};

/// Stays grouped by device, each group sorted by start time.
struct StaySet {
    std::vector<std::string> device_ids;
    std::vector<std::size_t> offsets{0};
    std::vector<Stay> stays;

    std::size_t device_count() const { return device_ids.size(); }
    std::span<const Stay> device(std::size_t i) const
    {
        return {stays.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }
    std::span<Stay> device(std::size_t i) { return {stays.data() + offsets[i], offsets[i + 1] - offsets[i]}; }
};

/// Coordinate-wise median (mean of the two middle values for even counts).
GeoPoint median_point(std::span<const GeoPoint> points);

/// Both phases for one device's time-sorted fixes. Returned stays have
/// device = 0 and labels numbered by first appearance.
std::vector<Stay> detect_stays(std::span<const Fix> fixes, const StayParams& params);
/// Quadratic reference implementation of the same rules.
std::vector<Stay> detect_stays_brute_force(std::span<const Fix> fixes, const StayParams& params);
/// Runs detect_stays on every device in parallel. Devices without stays are kept
/// with an empty range.
StaySet detect_stays(const FixSet& fixes, const StayParams& params);

/// Connected components of stay centres within r2. Labels are numbered in
/// order of each component's earliest stay.
void label_locations(std::span<Stay> stays, double r2_m);

/// True when [start, end) overlaps 22:00-06:00 local time.
bool touches_night(Timestamp start, Timestamp end, const LocalClock& clock);

/// Home location label: among the three labels with the most non-holiday
/// stays, the one with the most night stays. Ties go to the lower label.
std::optional<int> detect_home(std::span<const Stay> stays, const HolidayCalendar& calendar,
                               const LocalClock& clock = {});

enum class Group { F, N, M };
std::string to_string(Group g);
std::optional<Group> parse_group(std::string_view s);

struct IndividualProfile {
    int device = 0;
    int home_label = 0;
    GeoPoint home_point;
    int home_cell = 0;
    int home_census_zone = 0;
    Group group = Group::M;
    int home_nights = 0;
    int active_days = 0;
    int unique_locations = 0;
};

struct FilterRules {
    int min_home_nights = 3;
    int min_active_days = 8;
    int min_unique_locations = 3;
};

/// Infers homes and keeps devices with a home in a known grid cell and census
/// zone, enough nights at home, active days and distinct locations. Output is
/// in device order.
std::vector<IndividualProfile> filter_individuals(const StaySet& stays, const Zoning& zoning,
                                                  const HolidayCalendar& calendar, const LocalClock& clock = {},
                                                  const FilterRules& rules = {});

/// Weighted RMS great-circle distance (km) of points to their weighted
/// centroid on the sphere. nullopt when the total weight is zero.
std::optional<double> radius_of_gyration_km(std::span<const GeoPoint> points, std::span<const double> weights);
std::optional<double> radius_of_gyration_km(std::span<const Stay> stays);

/// device_id,label,lat,lon,start,end,duration,weight
void write_stays(const StaySet& stays, const std::string& path);
StaySet read_stays(const std::string& path);

/// device_id,home_label,home_lat,home_lon,home_cell,home_zone,home_nights,active_days,unique_locations
void write_profiles(const std::vector<IndividualProfile>& profiles, const StaySet& stays, const Zoning& zoning,
                    const std::string& path);
std::vector<IndividualProfile> read_profiles(const std::string& path, const StaySet& stays, const Zoning& zoning);

} // namespace mobiseg
