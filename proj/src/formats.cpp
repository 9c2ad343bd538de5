#include "mobiseg/formats.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace mobiseg {

namespace {

std::string field_str(std::string_view f)
{
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t'))
        f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t'))
        f.remove_suffix(1);
    return std::string(f);
}

std::optional<Composition> composition_of(std::string_view n, std::string_view f, std::string_view o)
{
    auto a = parse_int64(n);
    auto b = parse_int64(f);
    auto c = parse_int64(o);
    if (!a || !b || !c || *a < 0 || *b < 0 || *c < 0)
        return std::nullopt;
    return Composition{static_cast<double>(*a), static_cast<double>(*b), static_cast<double>(*c)};
}

std::string base_category(const std::string& name)
{
    if (name.size() > 4 && (name.ends_with(" (a)") || name.ends_with(" (s)")))
        return name.substr(0, name.size() - 4);
    return name;
}

} // namespace

// ---------------------------------------------------------------- fixes

void FixSet::add_device(std::string id, std::span<const Fix> device_fixes)
{
    device_ids.push_back(std::move(id));
    fixes.insert(fixes.end(), device_fixes.begin(), device_fixes.end());
    offsets.push_back(fixes.size());
}

FixSet read_fixes(const std::string& path, double max_malformed, ReadReport* report)
{
    CsvReader reader(path);
    FixSet out;
    if (reader.header().empty())
        return out;
    const std::size_t c_id = reader.require("id");
    const std::size_t c_lat = reader.require("lat");
    const std::size_t c_lon = reader.require("lon");
    const std::size_t c_t = reader.require("timestamp");
    const std::size_t width = reader.header().size();

    struct Row {
        std::uint32_t device;
        Fix fix;
    };
    std::vector<Row> rows;
    std::unordered_map<std::string, std::uint32_t> ids;
    std::vector<std::string> names;
    ReadReport rep;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        ++rep.rows;
        if (f.size() != width || f[c_id].empty()) {
            ++rep.malformed;
            continue;
        }
        auto lat = parse_double(f[c_lat]);
        auto lon = parse_double(f[c_lon]);
        auto t = parse_timestamp(f[c_t]);
        if (!lat || !lon || !t || *t < 0) {
            ++rep.malformed;
            continue;
        }
        const GeoPoint p{*lat, *lon};
        if (!p.valid()) {
            ++rep.malformed;
            continue;
        }
        std::string id(f[c_id]);
        auto [it, inserted] = ids.try_emplace(id, static_cast<std::uint32_t>(names.size()));
        if (inserted)
            names.push_back(std::move(id));
        rows.push_back({it->second, Fix{p, *t}});
    }
    if (report)
        *report = rep;
    if (rep.malformed > 0)
        warn(path + ": skipped " + std::to_string(rep.malformed) + " malformed of " + std::to_string(rep.rows) +
             " rows");
    if (rep.rows > 0 && static_cast<double>(rep.malformed) > max_malformed * static_cast<double>(rep.rows))
        throw InputError(path + ": " + std::to_string(rep.malformed) + " of " + std::to_string(rep.rows) +
                         " rows are malformed");

    std::vector<std::uint32_t> order(names.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return names[a] < names[b]; });
    std::vector<std::uint32_t> rank(names.size());
    for (std::uint32_t r = 0; r < order.size(); ++r)
        rank[order[r]] = r;

    std::vector<std::size_t> counts(names.size() + 1, 0);
    for (const auto& r : rows)
        ++counts[rank[r.device] + 1];
    std::partial_sum(counts.begin(), counts.end(), counts.begin());
    out.offsets = counts;
    out.fixes.resize(rows.size());
    std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
    for (const auto& r : rows)
        out.fixes[cursor[rank[r.device]]++] = r.fix;
    rows.clear();
    rows.shrink_to_fit();
    out.device_ids.reserve(names.size());
    for (auto i : order)
        out.device_ids.push_back(std::move(names[i]));
    for (std::size_t d = 0; d < out.device_ids.size(); ++d)
        std::stable_sort(out.fixes.begin() + static_cast<std::ptrdiff_t>(out.offsets[d]),
                         out.fixes.begin() + static_cast<std::ptrdiff_t>(out.offsets[d + 1]),
                         [](const Fix& a, const Fix& b) { return a.t < b.t; });
    return out;
}

void write_fixes(const FixSet& fixes, const std::string& path)
{
    CsvWriter w(path);
    w.header({"id", "lat", "lon", "timestamp"});
    for (std::size_t d = 0; d < fixes.device_count(); ++d)
        for (const auto& f : fixes.device(d)) {
            w.text(fixes.device_ids[d]).fixed(f.point.lat, 7).fixed(f.point.lon, 7).integer(f.t);
            w.end_row();
        }
    w.close();
}

// --------------------------------------------------------------- census

bool Polygon::contains(GeoPoint p) const
{
    bool inside = false;
    for (const auto& ring : rings) {
        const std::size_t n = ring.size();
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const GeoPoint& a = ring[i];
            const GeoPoint& b = ring[j];
            if ((a.lat > p.lat) != (b.lat > p.lat)) {
                const double x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
                if (p.lon < x)
                    inside = !inside;
            }
        }
    }
    return inside;
}

std::pair<GeoPoint, GeoPoint> Polygon::bbox() const
{
    GeoPoint lo{90.0, 180.0};
    GeoPoint hi{-90.0, -180.0};
    for (const auto& ring : rings)
        for (const auto& p : ring) {
            lo.lat = std::min(lo.lat, p.lat);
            lo.lon = std::min(lo.lon, p.lon);
            hi.lat = std::max(hi.lat, p.lat);
            hi.lon = std::max(hi.lon, p.lon);
        }
    return {lo, hi};
}

GeoPoint Polygon::bbox_center() const
{
    const auto [lo, hi] = bbox();
    return {(lo.lat + hi.lat) / 2.0, (lo.lon + hi.lon) / 2.0};
}

double Polygon::area_km2() const
{
    if (rings.empty())
        return 0.0;
    const LocalProjection proj(bbox_center());
    double total = 0.0;
    for (std::size_t r = 0; r < rings.size(); ++r) {
        const auto& ring = rings[r];
        double a = 0.0;
        for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
            const auto p = proj.forward(ring[j]);
            const auto q = proj.forward(ring[i]);
            a += p.x * q.y - q.x * p.y;
        }
        a = std::abs(a) / 2.0;
        total += r == 0 ? a : -a;
    }
    return total / 1e6;
}

bool Polygon::degenerate() const
{
    if (rings.empty() || rings.front().size() < 3)
        return true;
    for (const auto& ring : rings)
        for (const auto& p : ring)
            if (!p.valid())
                return true;
    return !(area_km2() > 0.0);
}

std::optional<Urbanity> urbanity_of(std::string_view zone_id)
{
    if (zone_id.size() != 9)
        return std::nullopt;
    switch (zone_id[4]) {
    case 'A':
    case 'B':
        return Urbanity::rural_suburban;
    case 'C':
        return Urbanity::urban;
    default:
        return std::nullopt;
    }
}

std::string polygon_to_json(const Polygon& poly)
{
    nlohmann::json rings = nlohmann::json::array();
    for (const auto& ring : poly.rings) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& p : ring)
            r.push_back({p.lon, p.lat});
        rings.push_back(std::move(r));
    }
    return rings.dump();
}

Polygon polygon_from_json(std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad polygon JSON: ") + e.what());
    }
    if (j.is_object()) {
        if (!j.contains("coordinates"))
            throw InputError("polygon JSON object lacks coordinates");
        j = j["coordinates"];
    }
    if (!j.is_array())
        throw InputError("polygon JSON must be an array of rings");
    Polygon poly;
    for (const auto& ring : j) {
        if (!ring.is_array())
            throw InputError("polygon ring must be an array");
        Ring r;
        for (const auto& pt : ring) {
            if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number())
                throw InputError("polygon vertex must be [lon, lat]");
            r.push_back({pt[1].get<double>(), pt[0].get<double>()});
        }
        poly.rings.push_back(std::move(r));
    }
    return poly;
}

std::vector<CensusZone> read_zones(const std::string& path)
{
    CsvReader reader(path);
    const std::size_t c_id = reader.require("zone_id");
    const std::size_t c_area = reader.require("area_km2");
    const std::size_t c_pop = reader.require("population");
    const std::size_t c_n = reader.require("native");
    const std::size_t c_f = reader.require("foreign");
    const std::size_t c_o = reader.require("other");
    const std::size_t c_geom = reader.require("geometry");
    const std::size_t width = reader.header().size();

    std::vector<CensusZone> zones;
    std::unordered_set<std::string> seen;
    std::size_t rejected = 0;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const std::string where = path + ":" + std::to_string(reader.line_number());
        if (f.size() != width) {
            warn(where + ": wrong field count, zone rejected");
            ++rejected;
            continue;
        }
        CensusZone z;
        z.id = field_str(f[c_id]);
        if (!seen.insert(z.id).second)
            throw InputError(where + ": duplicate zone_id " + z.id);
        const auto urb = urbanity_of(z.id);
        auto area = parse_double(f[c_area]);
        auto pop = parse_int64(f[c_pop]);
        auto comp = composition_of(f[c_n], f[c_f], f[c_o]);
        if (!urb || !area || !pop || !comp || *pop < 0) {
            warn(where + ": unparseable zone " + z.id + ", rejected");
            ++rejected;
            continue;
        }
        if (!(*area > 0.0)) {
            warn(where + ": zone " + z.id + " has non-positive area, rejected");
            ++rejected;
            continue;
        }
        if (comp->total() != static_cast<double>(*pop)) {
            warn(where + ": zone " + z.id + " composition does not sum to population, rejected");
            ++rejected;
            continue;
        }
        try {
            z.geometry = polygon_from_json(f[c_geom]);
        } catch (const InputError& e) {
            warn(where + ": " + e.what() + ", zone rejected");
            ++rejected;
            continue;
        }
        z.urbanity = *urb;
        z.area_km2 = *area;
        z.population = *pop;
        z.composition = *comp;
        zones.push_back(std::move(z));
    }
    if (rejected > 0)
        warn(path + ": rejected " + std::to_string(rejected) + " zones");
    std::sort(zones.begin(), zones.end(), [](const CensusZone& a, const CensusZone& b) { return a.id < b.id; });
    return zones;
}

std::vector<GridCell> read_grids(const std::string& path)
{
    CsvReader reader(path);
    const std::size_t c_id = reader.require("cell_id");
    const std::size_t c_size = reader.require("size_m");
    const std::size_t c_lat = reader.require("lat");
    const std::size_t c_lon = reader.require("lon");
    const std::size_t c_pop = reader.require("population");
    const std::size_t c_jobs = reader.require("jobs");
    const std::size_t c_n = reader.require("native");
    const std::size_t c_f = reader.require("foreign");
    const std::size_t c_o = reader.require("other");
    const std::size_t width = reader.header().size();

    std::vector<GridCell> cells;
    std::unordered_set<std::string> seen;
    std::size_t rejected = 0;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const std::string where = path + ":" + std::to_string(reader.line_number());
        if (f.size() != width) {
            ++rejected;
            continue;
        }
        GridCell c;
        c.id = field_str(f[c_id]);
        if (!seen.insert(c.id).second)
            throw InputError(where + ": duplicate cell_id " + c.id);
        auto size = parse_int64(f[c_size]);
        auto lat = parse_double(f[c_lat]);
        auto lon = parse_double(f[c_lon]);
        auto pop = parse_int64(f[c_pop]);
        auto jobs = parse_int64(f[c_jobs]);
        auto comp = composition_of(f[c_n], f[c_f], f[c_o]);
        if (!size || (*size != 250 && *size != 1000) || !lat || !lon || !pop || !jobs || *pop < 0 || *jobs < 0 ||
            !comp || !GeoPoint{*lat, *lon}.valid()) {
            warn(where + ": invalid grid cell " + c.id + ", rejected");
            ++rejected;
            continue;
        }
        if (comp->total() != static_cast<double>(*pop)) {
            warn(where + ": cell " + c.id + " composition does not sum to population, rejected");
            ++rejected;
            continue;
        }
        c.size_m = static_cast<int>(*size);
        c.centroid = {*lat, *lon};
        c.population = *pop;
        c.jobs = *jobs;
        c.composition = *comp;
        cells.push_back(std::move(c));
    }
    if (rejected > 0)
        warn(path + ": rejected " + std::to_string(rejected) + " grid cells");
    std::sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) { return a.id < b.id; });
    return cells;
}

void write_zones(const std::vector<CensusZone>& zones, const std::string& path)
{
    CsvWriter w(path);
    w.header({"zone_id", "area_km2", "population", "native", "foreign", "other", "geometry"});
    for (const auto& z : zones) {
        w.text(z.id).exact(z.area_km2).integer(z.population);
        w.integer(static_cast<std::int64_t>(z.composition.native))
            .integer(static_cast<std::int64_t>(z.composition.foreign))
            .integer(static_cast<std::int64_t>(z.composition.other));
        w.text(polygon_to_json(z.geometry));
        w.end_row();
    }
    w.close();
}

void write_grids(const std::vector<GridCell>& cells, const std::string& path)
{
    CsvWriter w(path);
    w.header({"cell_id", "size_m", "lat", "lon", "population", "jobs", "native", "foreign", "other"});
    for (const auto& c : cells) {
        w.text(c.id).integer(c.size_m).fixed(c.centroid.lat, 7).fixed(c.centroid.lon, 7);
        w.integer(c.population).integer(c.jobs);
        w.integer(static_cast<std::int64_t>(c.composition.native))
            .integer(static_cast<std::int64_t>(c.composition.foreign))
            .integer(static_cast<std::int64_t>(c.composition.other));
        w.end_row();
    }
    w.close();
}

// ----------------------------------------------------------------- POIs

CategoryTable::CategoryTable(std::vector<std::string> names) : names_(std::move(names))
{
    std::unordered_set<std::string> seen;
    for (const auto& n : names_)
        if (n.empty() || !seen.insert(n).second)
            throw InputError("category table has an empty or duplicate name: '" + n + "'");
    build_ladders();
}

CategoryTable CategoryTable::standard()
{
    return CategoryTable({"Artisan Workshops",
                          "Automotive Services (a)",
                          "Automotive Services (s)",
                          "Craft",
                          "Education (a)",
                          "Education (s)",
                          "Entertainment (s)",
                          "Fashion and Accessories (s)",
                          "Financial Services (a)",
                          "Financial Services (s)",
                          "Food and Drink (a)",
                          "Food and Drink (s)",
                          "Groceries and Food (a)",
                          "Groceries and Food (s)",
                          "Health and Beauty (a)",
                          "Health and Beauty (s)",
                          "Healthcare (a)",
                          "Healthcare (s)",
                          "Home and Living",
                          "Leisure",
                          "Office",
                          "Office (s)",
                          "Outdoor Recreation (a)",
                          "Outdoor Recreation (s)",
                          "Recreation (a)",
                          "Recreation (s)",
                          "Religious Places (a)",
                          "Shop",
                          "Sports and Activities (a)",
                          "Sports and Activities (s)",
                          "Tourism",
                          "Transportation (a)",
                          "Transportation (s)"});
}

CategoryTable CategoryTable::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot read category table " + path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos)
            continue;
        names.push_back(line.substr(start));
    }
    return CategoryTable(std::move(names));
}

std::optional<int> CategoryTable::find(std::string_view name) const
{
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name)
            return static_cast<int>(i);
    return std::nullopt;
}

bool CategoryTable::is_shop(int c) const
{
    const auto& n = name(c);
    return n == "Shop" || n.ends_with(" (s)");
}

void CategoryTable::build_ladders()
{
    const int n = static_cast<int>(names_.size());
    ladders_.assign(names_.size(), {});
    auto is_office_craft = [&](int c) {
        const auto b = base_category(name(c));
        return b == "Office" || b == "Craft";
    };
    for (int c = 0; c < n; ++c) {
        std::vector<bool> in(names_.size(), false);
        auto snapshot = [&] {
            std::vector<int> level;
            for (int k = 0; k < n; ++k)
                if (in[static_cast<std::size_t>(k)])
                    level.push_back(k);
            auto& ladder = ladders_[static_cast<std::size_t>(c)];
            if (ladder.empty() || ladder.back() != level)
                ladder.push_back(std::move(level));
        };
        in[static_cast<std::size_t>(c)] = true;
        snapshot();
        const auto base = base_category(name(c));
        for (int k = 0; k < n; ++k)
            if (base_category(name(k)) == base)
                in[static_cast<std::size_t>(k)] = true;
        snapshot();
        bool office = false;
        for (int k = 0; k < n; ++k)
            office = office || (in[static_cast<std::size_t>(k)] && is_office_craft(k));
        if (office)
            for (int k = 0; k < n; ++k)
                if (is_office_craft(k))
                    in[static_cast<std::size_t>(k)] = true;
        snapshot();
        bool shop = false;
        for (int k = 0; k < n; ++k)
            shop = shop || (in[static_cast<std::size_t>(k)] && is_shop(k));
        if (shop)
            for (int k = 0; k < n; ++k)
                if (is_shop(k))
                    in[static_cast<std::size_t>(k)] = true;
        snapshot();
    }
}

std::vector<PoiRecord> read_pois(const std::string& path, const CategoryTable& categories)
{
    CsvReader reader(path);
    const std::size_t c_id = reader.require("poi_id");
    const std::size_t c_lat = reader.require("lat");
    const std::size_t c_lon = reader.require("lon");
    const std::size_t c_cls = reader.require("class");
    const std::size_t c_sub = reader.require("subclass");
    const std::size_t c_cat = reader.require("category");
    const std::size_t width = reader.header().size();
    std::vector<PoiRecord> pois;
    std::unordered_set<std::string> seen;
    std::size_t skipped = 0;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        if (f.size() != width) {
            ++skipped;
            continue;
        }
        PoiRecord p;
        p.id = field_str(f[c_id]);
        auto lat = parse_double(f[c_lat]);
        auto lon = parse_double(f[c_lon]);
        auto cat = categories.find(field_str(f[c_cat]));
        if (!lat || !lon || !cat || !GeoPoint{*lat, *lon}.valid() || p.id.empty()) {
            ++skipped;
            continue;
        }
        if (!seen.insert(p.id).second)
            throw InputError(path + ": duplicate poi_id " + p.id);
        p.point = {*lat, *lon};
        p.cls = field_str(f[c_cls]);
        p.subclass = field_str(f[c_sub]);
        p.category = *cat;
        pois.push_back(std::move(p));
    }
    if (skipped > 0)
        warn(path + ": skipped " + std::to_string(skipped) + " POIs with bad coordinates or unknown category");
    std::sort(pois.begin(), pois.end(), [](const PoiRecord& a, const PoiRecord& b) { return a.id < b.id; });
    return pois;
}

void write_pois(const std::vector<PoiRecord>& pois, const CategoryTable& categories, const std::string& path)
{
    CsvWriter w(path);
    w.header({"poi_id", "lat", "lon", "class", "subclass", "category"});
    for (const auto& p : pois) {
        w.text(p.id).fixed(p.point.lat, 7).fixed(p.point.lon, 7).text(p.cls).text(p.subclass);
        w.text(categories.name(p.category));
        w.end_row();
    }
    w.close();
}

// ----------------------------------------------------------------- GTFS

std::optional<int> parse_gtfs_time(std::string_view s)
{
    while (!s.empty() && s.front() == ' ')
        s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ')
        s.remove_suffix(1);
    const auto c1 = s.find(':');
    if (c1 == std::string_view::npos)
        return std::nullopt;
    const auto c2 = s.find(':', c1 + 1);
    if (c2 == std::string_view::npos)
        return std::nullopt;
    auto h = parse_int64(s.substr(0, c1));
    auto m = parse_int64(s.substr(c1 + 1, c2 - c1 - 1));
    auto sec = parse_int64(s.substr(c2 + 1));
    if (!h || !m || !sec || *h < 0 || *h > 72 || *m < 0 || *m > 59 || *sec < 0 || *sec > 59)
        return std::nullopt;
    return static_cast<int>(*h * 3600 + *m * 60 + *sec);
}

std::string format_gtfs_time(int seconds)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d:%02d", seconds / 3600, seconds / 60 % 60, seconds % 60);
    return buf;
}

std::vector<Connection> Schedule::for_weekday(int d) const
{
    std::vector<Connection> out;
    const auto bit = static_cast<std::uint8_t>(1u << d);
    for (const auto& c : connections)
        if (c.days & bit)
            out.push_back(c);
    return out;
}

Schedule read_gtfs(const std::string& dir)
{
    namespace fs = std::filesystem;
    for (const char* name : {"stops.txt", "trips.txt", "stop_times.txt", "calendar.txt"})
        if (!fs::exists(fs::path(dir) / name))
            throw InputError("GTFS feed " + dir + " lacks " + name);

    Schedule sched;
    std::unordered_map<std::string, int> stop_index;
    {
        CsvReader r((fs::path(dir) / "stops.txt").string());
        const auto c_id = r.require("stop_id");
        const auto c_lat = r.require("stop_lat");
        const auto c_lon = r.require("stop_lon");
        std::vector<std::string_view> f;
        std::vector<Stop> stops;
        while (r.next(f)) {
            if (f.size() != r.header().size())
                continue;
            auto lat = parse_double(f[c_lat]);
            auto lon = parse_double(f[c_lon]);
            if (!lat || !lon || !GeoPoint{*lat, *lon}.valid()) {
                warn(r.path() + ": stop with bad coordinates skipped");
                continue;
            }
            stops.push_back({field_str(f[c_id]), {*lat, *lon}});
        }
        std::sort(stops.begin(), stops.end(), [](const Stop& a, const Stop& b) { return a.id < b.id; });
        for (auto& s : stops) {
            if (!stop_index.try_emplace(s.id, static_cast<int>(sched.stops.size())).second)
                throw InputError(r.path() + ": duplicate stop_id " + s.id);
            sched.stops.push_back(std::move(s));
        }
    }
    std::unordered_map<std::string, std::uint8_t> service_days;
    {
        CsvReader r((fs::path(dir) / "calendar.txt").string());
        const auto c_id = r.require("service_id");
        static const char* days[] = {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"};
        std::size_t cols[7];
        for (int d = 0; d < 7; ++d)
            cols[d] = r.require(days[d]);
        std::vector<std::string_view> f;
        while (r.next(f)) {
            if (f.size() != r.header().size())
                continue;
            std::uint8_t mask = 0;
            for (int d = 0; d < 7; ++d)
                if (field_str(f[cols[d]]) == "1")
                    mask = static_cast<std::uint8_t>(mask | (1u << d));
            service_days[field_str(f[c_id])] = mask;
        }
    }
    std::map<std::string, std::uint8_t> trip_days;
    {
        CsvReader r((fs::path(dir) / "trips.txt").string());
        const auto c_trip = r.require("trip_id");
        const auto c_service = r.require("service_id");
        std::vector<std::string_view> f;
        while (r.next(f)) {
            if (f.size() != r.header().size())
                continue;
            auto it = service_days.find(field_str(f[c_service]));
            trip_days[field_str(f[c_trip])] = it == service_days.end() ? 0 : it->second;
        }
    }
    struct StopTime {
        int sequence;
        int arrival;
        int departure;
        int stop;
    };
    std::map<std::string, std::vector<StopTime>> trips;
    std::set<std::string> broken;
    {
        CsvReader r((fs::path(dir) / "stop_times.txt").string());
        const auto c_trip = r.require("trip_id");
        const auto c_arr = r.require("arrival_time");
        const auto c_dep = r.require("departure_time");
        const auto c_stop = r.require("stop_id");
        const auto c_seq = r.require("stop_sequence");
        std::vector<std::string_view> f;
        while (r.next(f)) {
            if (f.size() != r.header().size())
                continue;
            std::string trip = field_str(f[c_trip]);
            auto arr = parse_gtfs_time(f[c_arr]);
            auto dep = parse_gtfs_time(f[c_dep]);
            auto seq = parse_int64(f[c_seq]);
            auto stop = stop_index.find(field_str(f[c_stop]));
            if (!arr || !dep || !seq || stop == stop_index.end()) {
                broken.insert(trip);
                continue;
            }
            trips[trip].push_back({static_cast<int>(*seq), *arr, *dep, stop->second});
        }
    }
    std::size_t dropped = 0;
    for (auto& [trip_id, times] : trips) {
        auto days = trip_days.find(trip_id);
        if (days == trip_days.end() || days->second == 0)
            continue;
        if (broken.count(trip_id)) {
            warn("GTFS trip " + trip_id + " has unparseable stop times, dropped");
            ++dropped;
            continue;
        }
        std::sort(times.begin(), times.end(), [](const StopTime& a, const StopTime& b) { return a.sequence < b.sequence; });
        bool ok = true;
        for (std::size_t k = 0; k < times.size(); ++k) {
            if (times[k].departure < times[k].arrival)
                ok = false;
            if (k > 0 && (times[k].sequence == times[k - 1].sequence || times[k].arrival < times[k - 1].departure))
                ok = false;
        }
        if (!ok) {
            warn("GTFS trip " + trip_id + " has non-monotone stop times, dropped");
            ++dropped;
            continue;
        }
        const int trip = static_cast<int>(sched.trip_ids.size());
        sched.trip_ids.push_back(trip_id);
        for (std::size_t k = 1; k < times.size(); ++k)
            sched.connections.push_back(
                {times[k - 1].stop, times[k].stop, times[k - 1].departure, times[k].arrival, trip, days->second});
    }
    std::sort(sched.connections.begin(), sched.connections.end(), [](const Connection& a, const Connection& b) {
        return std::tie(a.departure, a.arrival, a.trip, a.from_stop) <
               std::tie(b.departure, b.arrival, b.trip, b.from_stop);
    });
    return sched;
}

void write_gtfs(const std::string& dir, const std::vector<Stop>& stops, const std::vector<GtfsService>& services,
                const std::vector<GtfsTrip>& trips)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        CsvWriter w((fs::path(dir) / "stops.txt").string());
        w.header({"stop_id", "stop_name", "stop_lat", "stop_lon"});
        for (const auto& s : stops) {
            w.text(s.id).text(s.id).fixed(s.point.lat, 7).fixed(s.point.lon, 7);
            w.end_row();
        }
        w.close();
    }
    {
        CsvWriter w((fs::path(dir) / "calendar.txt").string());
        w.header({"service_id", "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
                  "start_date", "end_date"});
        for (const auto& s : services) {
            w.text(s.service_id);
            for (int d = 0; d < 7; ++d)
                w.integer((s.days >> d) & 1u);
            w.text("20190101").text("20201231");
            w.end_row();
        }
        w.close();
    }
    {
        CsvWriter w((fs::path(dir) / "trips.txt").string());
        w.header({"route_id", "service_id", "trip_id"});
        for (const auto& t : trips) {
            const auto cut = t.trip_id.find('_');
            w.text(t.trip_id.substr(0, cut)).text(t.service_id).text(t.trip_id);
            w.end_row();
        }
        w.close();
    }
    {
        CsvWriter w((fs::path(dir) / "stop_times.txt").string());
        w.header({"trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"});
        for (const auto& t : trips)
            for (std::size_t k = 0; k < t.stop_ids.size(); ++k) {
                w.text(t.trip_id).text(format_gtfs_time(t.arrivals[k])).text(format_gtfs_time(t.departures[k]));
                w.text(t.stop_ids[k]).integer(static_cast<std::int64_t>(k + 1));
                w.end_row();
            }
        w.close();
    }
}

} // namespace mobiseg
