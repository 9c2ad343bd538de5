#include "mobiseg/geo_time.hpp"

#include "mobiseg/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mobiseg {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0)))
        --q;
    return q;
}

template <class T>
bool parse_int(std::string_view s, T& out)
{
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

} // namespace

bool GeoPoint::valid() const
{
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 && lon >= -180.0 &&
           lon <= 180.0;
}

double haversine_m(GeoPoint a, GeoPoint b)
{
    const double dlat = (b.lat - a.lat) * kDeg;
    const double dlon = (b.lon - a.lon) * kDeg;
    const double s1 = std::sin(dlat / 2.0);
    const double s2 = std::sin(dlon / 2.0);
    const double h = s1 * s1 + std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * s2 * s2;
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

LocalProjection::LocalProjection(GeoPoint origin)
    : origin_(origin), sin_lat0_(std::sin(origin.lat * kDeg)), cos_lat0_(std::cos(origin.lat * kDeg))
{
}

PlanarPoint LocalProjection::forward(GeoPoint p) const
{
    const double lat = p.lat * kDeg;
    const double dlon = (p.lon - origin_.lon) * kDeg;
    const double sin_lat = std::sin(lat);
    const double cos_lat = std::cos(lat);
    const double cos_dlon = std::cos(dlon);
    const double cos_c = std::clamp(sin_lat0_ * sin_lat + cos_lat0_ * cos_lat * cos_dlon, -1.0, 1.0);
    const double c = std::acos(cos_c);
    const double k = c < 1e-12 ? 1.0 : c / std::sin(c);
    return {kEarthRadiusM * k * cos_lat * std::sin(dlon),
            kEarthRadiusM * k * (cos_lat0_ * sin_lat - sin_lat0_ * cos_lat * cos_dlon)};
}

GeoPoint LocalProjection::inverse(PlanarPoint p) const
{
    const double rho = std::hypot(p.x, p.y);
    if (rho < 1e-9)
        return origin_;
    const double c = rho / kEarthRadiusM;
    const double sin_c = std::sin(c);
    const double cos_c = std::cos(c);
    const double lat = std::asin(std::clamp(cos_c * sin_lat0_ + p.y * sin_c * cos_lat0_ / rho, -1.0, 1.0));
    const double lon =
        origin_.lon * kDeg + std::atan2(p.x * sin_c, rho * cos_lat0_ * cos_c - p.y * sin_lat0_ * sin_c);
    return {lat / kDeg, lon / kDeg};
}

Date LocalClock::local_date(Timestamp t) const
{
    return Date{std::chrono::days{floor_div(local_seconds(t), kSecondsPerDay)}};
}

int LocalClock::seconds_of_day(Timestamp t) const
{
    const std::int64_t s = local_seconds(t);
    return static_cast<int>(s - floor_div(s, kSecondsPerDay) * kSecondsPerDay);
}

Timestamp LocalClock::midnight(Date d) const
{
    return static_cast<Timestamp>(d.time_since_epoch().count()) * kSecondsPerDay - offset_seconds;
}

IntervalIndex interval_of(int seconds_of_day)
{
    if (seconds_of_day < 0 || seconds_of_day >= kSecondsPerDay)
        throw InputError("seconds of day out of range: " + std::to_string(seconds_of_day));
    return IntervalIndex{seconds_of_day / kIntervalSeconds + 1};
}

std::vector<IntervalIndex> intervals_spanned(Timestamp start, Timestamp end, const LocalClock& clock)
{
    if (end < start)
        throw InputError("interval end precedes start");
    const Date day = clock.local_date(start);
    if (end > clock.midnight(day + std::chrono::days{1}))
        throw InputError("interval crosses local midnight; split it first");
    const int first = interval_of(clock.seconds_of_day(start)).value;
    const int last = end == start ? first : (static_cast<int>(end - 1 - clock.midnight(day)) / kIntervalSeconds + 1);
    std::vector<IntervalIndex> out;
    out.reserve(static_cast<std::size_t>(last - first + 1));
    for (int i = first; i <= last; ++i)
        out.push_back(IntervalIndex{i});
    return out;
}

std::vector<TimePiece> split_at_local_midnight(Timestamp start, Timestamp end, const LocalClock& clock)
{
    if (end < start)
        throw InputError("interval end precedes start");
    std::vector<TimePiece> pieces;
    Date day = clock.local_date(start);
    Timestamp cursor = start;
    for (;;) {
        const Timestamp next_midnight = clock.midnight(day + std::chrono::days{1});
        if (end <= next_midnight) {
            pieces.push_back({cursor, end, day});
            break;
        }
        pieces.push_back({cursor, next_midnight, day});
        cursor = next_midnight;
        day += std::chrono::days{1};
    }
    return pieces;
}

HolidayCalendar::HolidayCalendar(std::vector<DateRange> ranges) : ranges_(std::move(ranges))
{
    for (const auto& r : ranges_)
        if (r.last < r.first)
            throw InputError("holiday range ends before it starts: " + format_date(r.first));
    std::sort(ranges_.begin(), ranges_.end(), [](const DateRange& a, const DateRange& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < ranges_.size(); ++i)
        if (ranges_[i].first <= ranges_[i - 1].last)
            throw InputError("holiday ranges overlap at " + format_date(ranges_[i].first));
}

HolidayCalendar HolidayCalendar::sweden_2019()
{
    return HolidayCalendar({{parse_date("2019-06-23"), parse_date("2019-08-11")},
                            {parse_date("2019-12-22"), parse_date("2020-01-01")}});
}

HolidayCalendar HolidayCalendar::parse(std::string_view text)
{
    std::vector<DateRange> ranges;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        std::string_view a = line;
        std::string_view b = line;
        if (auto sep = line.find("--"); sep != std::string_view::npos) {
            a = trim(line.substr(0, sep));
            b = trim(line.substr(sep + 2));
        } else if (auto comma = line.find(','); comma != std::string_view::npos) {
            a = trim(line.substr(0, comma));
            b = trim(line.substr(comma + 1));
        }
        auto first = try_parse_date(a);
        auto last = try_parse_date(b);
        if (!first || !last)
            throw InputError("holiday calendar line " + std::to_string(line_no) + ": bad date range");
        ranges.push_back({*first, *last});
    }
    return HolidayCalendar(std::move(ranges));
}

HolidayCalendar HolidayCalendar::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot read holiday calendar: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

bool HolidayCalendar::contains(Date d) const
{
    auto it = std::upper_bound(ranges_.begin(), ranges_.end(), d,
                               [](Date x, const DateRange& r) { return x < r.first; });
    if (it == ranges_.begin())
        return false;
    --it;
    return d <= it->last;
}

std::string HolidayCalendar::to_text() const
{
    std::string out;
    for (const auto& r : ranges_)
        out += format_date(r.first) + "--" + format_date(r.last) + "\n";
    return out;
}

DayType day_type(Date d, const HolidayCalendar& calendar)
{
    const unsigned wd = std::chrono::weekday{d}.c_encoding(); // 0 = Sunday
    return DayType{wd >= 1 && wd <= 5, calendar.contains(d)};
}

std::optional<Date> try_parse_date(std::string_view iso)
{
    iso = trim(iso);
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-')
        return std::nullopt;
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    if (!parse_int(iso.substr(0, 4), y) || !parse_int(iso.substr(5, 2), m) || !parse_int(iso.substr(8, 2), d))
        return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok())
        return std::nullopt;
    return Date{ymd};
}

Date parse_date(std::string_view iso)
{
    auto d = try_parse_date(iso);
    if (!d)
        throw InputError("invalid date: " + std::string(iso));
    return *d;
}

std::string format_date(Date d)
{
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

std::optional<Timestamp> parse_timestamp(std::string_view text)
{
    text = trim(text);
    if (text.empty())
        return std::nullopt;
    Timestamp t = 0;
    if (parse_int(text, t))
        return t;
    // YYYY-MM-DDTHH:MM:SS with optional Z or +HH:MM / -HH:MM
    if (text.size() < 19 || (text[10] != 'T' && text[10] != ' ') || text[13] != ':' || text[16] != ':')
        return std::nullopt;
    auto date = try_parse_date(text.substr(0, 10));
    int hh = 0;
    int mm = 0;
    int ss = 0;
    if (!date || !parse_int(text.substr(11, 2), hh) || !parse_int(text.substr(14, 2), mm) ||
        !parse_int(text.substr(17, 2), ss) || hh > 23 || mm > 59 || ss > 60)
        return std::nullopt;
    std::string_view zone = text.substr(19);
    int offset = 0;
    if (!zone.empty() && zone != "Z") {
        if (zone.size() != 6 || (zone[0] != '+' && zone[0] != '-') || zone[3] != ':')
            return std::nullopt;
        int oh = 0;
        int om = 0;
        if (!parse_int(zone.substr(1, 2), oh) || !parse_int(zone.substr(4, 2), om))
            return std::nullopt;
        offset = (oh * 3600 + om * 60) * (zone[0] == '-' ? -1 : 1);
    }
    return static_cast<Timestamp>(date->time_since_epoch().count()) * kSecondsPerDay + hh * 3600 + mm * 60 + ss -
           offset;
}

} // namespace mobiseg
