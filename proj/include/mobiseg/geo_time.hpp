#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mobiseg {

constexpr double kEarthRadiusM = 6371000.0;

/// WGS84 coordinate in degrees.
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool valid() const;
    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Great-circle distance in meters on a sphere of radius kEarthRadiusM.
double haversine_m(GeoPoint a, GeoPoint b);

/// Planar coordinates in meters (east, north).
struct PlanarPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Azimuthal equidistant projection centred on `origin`. Distances and
/// azimuths from the origin are exact.
class LocalProjection {
  public:
    LocalProjection() = default;
    explicit LocalProjection(GeoPoint origin);

    PlanarPoint forward(GeoPoint p) const;
    GeoPoint inverse(PlanarPoint p) const;
    GeoPoint origin() const { return origin_; }

  private:
    GeoPoint origin_{};
    double sin_lat0_ = 0.0;
    double cos_lat0_ = 1.0;
};

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;
using Date = std::chrono::sys_days;

constexpr int kSecondsPerDay = 86400;
constexpr int kIntervalsPerDay = 48;
constexpr int kIntervalSeconds = 1800;
/// 48 half-hour slots x weekday/weekend x holiday/non-holiday.
constexpr int kTemporalUnits = 192;

/// Converts UTC timestamps to local wall time with a fixed offset.
struct LocalClock {
    int offset_seconds = 2 * 3600;

    std::int64_t local_seconds(Timestamp t) const { return t + offset_seconds; }
    Date local_date(Timestamp t) const;
    int seconds_of_day(Timestamp t) const;
    /// UTC timestamp of local midnight starting `d`.
    Timestamp midnight(Date d) const;
};

/// Half-hour slot of the local day, 1..48.
struct IntervalIndex {
    int value = 1;
    friend auto operator<=>(const IntervalIndex&, const IntervalIndex&) = default;
};

IntervalIndex interval_of(int seconds_of_day);

/// Slots intersected by [start, end). Both ends must fall on the same local
/// day (end may be the following midnight). A zero-length interval touches
/// the slot containing `start`.
std::vector<IntervalIndex> intervals_spanned(Timestamp start, Timestamp end, const LocalClock& clock);

struct TimePiece {
    Timestamp start;
    Timestamp end;
    Date date;
};

/// Splits [start, end) at local midnights.
std::vector<TimePiece> split_at_local_midnight(Timestamp start, Timestamp end, const LocalClock& clock);

struct DayType {
    bool weekday = true;
    bool holiday = false;
    friend bool operator==(const DayType&, const DayType&) = default;
};

/// Index of (interval, day type) in 0..191.
inline int temporal_unit(IntervalIndex i, DayType d)
{
    return ((d.weekday ? 1 : 0) * 2 + (d.holiday ? 1 : 0)) * kIntervalsPerDay + (i.value - 1);
}

/// Units used for experienced segregation: non-holiday weekdays.
inline bool is_routine_unit(int unit) { return unit / kIntervalsPerDay == 2; }
inline IntervalIndex unit_interval(int unit) { return IntervalIndex{unit % kIntervalsPerDay + 1}; }

struct DateRange {
    Date first;
    Date last; ///< inclusive
};

/// Sorted, non-overlapping closed date ranges.
class HolidayCalendar {
  public:
    HolidayCalendar() = default;
    explicit HolidayCalendar(std::vector<DateRange> ranges);

    /// Summer 2019-06-23..2019-08-11 and winter 2019-12-22..2020-01-01.
    static HolidayCalendar sweden_2019();
    /// One range per line, "YYYY-MM-DD--YYYY-MM-DD" or "YYYY-MM-DD,YYYY-MM-DD";
    /// a single date is a one-day range; '#' starts a comment.
    static HolidayCalendar parse(std::string_view text);
    static HolidayCalendar load(const std::string& path);

    bool contains(Date d) const;
    const std::vector<DateRange>& ranges() const { return ranges_; }
    std::string to_text() const;

  private:
    std::vector<DateRange> ranges_;
};

DayType day_type(Date d, const HolidayCalendar& calendar);

Date parse_date(std::string_view iso);
std::optional<Date> try_parse_date(std::string_view iso);
std::string format_date(Date d);

/// Parses either integer epoch seconds or "YYYY-MM-DDTHH:MM:SS[Z|+HH:MM]".
std::optional<Timestamp> parse_timestamp(std::string_view text);

} // namespace mobiseg
