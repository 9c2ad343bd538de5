#include "mobiseg/zoning.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/csv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mobiseg {

namespace {

constexpr double kSqrt3 = std::numbers::sqrt3;
constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;

std::int64_t hex_key(int q, int r)
{
    return (static_cast<std::int64_t>(q) << 32) ^ static_cast<std::int64_t>(static_cast<std::uint32_t>(r));
}

PlanarPoint hex_center(int q, int r, double size)
{
    return {size * kSqrt3 * (q + r / 2.0), size * 1.5 * r};
}

std::pair<int, int> hex_round(PlanarPoint p, double size)
{
    const double qf = (kSqrt3 / 3.0 * p.x - p.y / 3.0) / size;
    const double rf = (2.0 / 3.0 * p.y) / size;
    const double sf = -qf - rf;
    double q = std::round(qf);
    double r = std::round(rf);
    const double s = std::round(sf);
    const double dq = std::abs(q - qf);
    const double dr = std::abs(r - rf);
    const double ds = std::abs(s - sf);
    if (dq > dr && dq > ds)
        q = -r - s;
    else if (dr > ds)
        r = -q - s;
    return {static_cast<int>(q), static_cast<int>(r)};
}

} // namespace

ResolutionLadder ResolutionLadder::standard()
{
    ResolutionLadder l;
    l.bands = {{0.5, 0}, {3.5, 9}, {15.0, 8}, {100.0, 7}, {720.0, 6}, {std::numeric_limits<double>::infinity(), 5}};
    l.target_area_km2 = {0.0, 0.0, 0.0, 0.0, 0.0, 252.9, 36.1, 5.2, 0.7, 0.1};
    return l;
}

int ResolutionLadder::resolution_for(double parent_area_km2) const
{
    for (const auto& b : bands)
        if (parent_area_km2 < b.upper_km2)
            return b.resolution;
    return bands.back().resolution;
}

double ResolutionLadder::target_area(int resolution) const
{
    if (resolution <= 0 || static_cast<std::size_t>(resolution) >= target_area_km2.size() ||
        !(target_area_km2[static_cast<std::size_t>(resolution)] > 0.0))
        throw InputError("no target area for resolution " + std::to_string(resolution));
    return target_area_km2[static_cast<std::size_t>(resolution)];
}

double hex_edge_m(double area_km2)
{
    return std::sqrt(2.0 * area_km2 * 1e6 / (3.0 * kSqrt3));
}

std::optional<std::size_t> Zoning::Buckets::bucket(GeoPoint p) const
{
    const double fi = (p.lat - origin.lat) / step_lat;
    const double fj = (p.lon - origin.lon) / step_lon;
    if (!(fi >= 0.0) || !(fj >= 0.0) || fi >= n_lat || fj >= n_lon)
        return std::nullopt;
    return static_cast<std::size_t>(static_cast<int>(fi) * n_lon + static_cast<int>(fj));
}

Zoning::Zoning(std::vector<CensusZone> zones, std::vector<GridCell> cells, const ResolutionLadder& ladder)
    : census_(std::move(zones)), cells_(std::move(cells))
{
    // Analysis zones.
    grids_.resize(census_.size());
    usable_.assign(census_.size(), true);
    bboxes_.resize(census_.size());
    std::size_t skipped = 0;
    for (std::size_t z = 0; z < census_.size(); ++z) {
        const auto& cz = census_[z];
        bboxes_[z] = cz.geometry.bbox();
        HexGrid& g = grids_[z];
        g.first = static_cast<int>(zones_.size());
        if (cz.geometry.degenerate()) {
            usable_[z] = false;
            ++skipped;
            continue;
        }
        const int res = ladder.resolution_for(cz.area_km2);
        if (res == 0) {
            zones_.push_back({cz.id, static_cast<int>(z), 0, cz.area_km2, cz.geometry.bbox_center()});
            g.count = 1;
            continue;
        }
        g.proj = LocalProjection(cz.geometry.bbox_center());
        g.size = hex_edge_m(ladder.target_area(res));
        const double hex_area = ladder.target_area(res);
        double xmin = std::numeric_limits<double>::infinity();
        double xmax = -xmin;
        double ymin = xmin;
        double ymax = -xmin;
        for (const auto& ring : cz.geometry.rings)
            for (const auto& p : ring) {
                const auto xy = g.proj.forward(p);
                xmin = std::min(xmin, xy.x);
                xmax = std::max(xmax, xy.x);
                ymin = std::min(ymin, xy.y);
                ymax = std::max(ymax, xy.y);
            }
        const int r_lo = static_cast<int>(std::floor(ymin / (1.5 * g.size))) - 1;
        const int r_hi = static_cast<int>(std::ceil(ymax / (1.5 * g.size))) + 1;
        for (int r = r_lo; r <= r_hi; ++r) {
            const int q_lo = static_cast<int>(std::floor(xmin / (kSqrt3 * g.size) - r / 2.0)) - 1;
            const int q_hi = static_cast<int>(std::ceil(xmax / (kSqrt3 * g.size) - r / 2.0)) + 1;
            for (int q = q_lo; q <= q_hi; ++q) {
                const GeoPoint c = g.proj.inverse(hex_center(q, r, g.size));
                if (!cz.geometry.contains(c))
                    continue;
                g.cells.emplace(hex_key(q, r), static_cast<int>(zones_.size()));
                zones_.push_back({cz.id + "-" + std::to_string(res) + "-" + std::to_string(q) + "_" + std::to_string(r),
                                  static_cast<int>(z), res, hex_area, c});
            }
        }
        if (g.cells.empty()) {
            // No hexagon centre falls inside: the hexagon holding the bbox centre
            // covers the whole zone.
            const auto [q, r] = hex_round(g.proj.forward(cz.geometry.bbox_center()), g.size);
            g.cells.emplace(hex_key(q, r), static_cast<int>(zones_.size()));
            zones_.push_back({cz.id + "-" + std::to_string(res) + "-" + std::to_string(q) + "_" + std::to_string(r),
                              static_cast<int>(z), res, cz.area_km2, cz.geometry.bbox_center()});
        }
        g.count = static_cast<int>(zones_.size()) - g.first;
    }
    if (skipped > 0)
        warn("skipped " + std::to_string(skipped) + " census zones with degenerate polygons");

    // Census-zone buckets.
    {
        GeoPoint lo{90.0, 180.0};
        GeoPoint hi{-90.0, -180.0};
        for (std::size_t z = 0; z < census_.size(); ++z) {
            if (!usable_[z])
                continue;
            lo.lat = std::min(lo.lat, bboxes_[z].first.lat);
            lo.lon = std::min(lo.lon, bboxes_[z].first.lon);
            hi.lat = std::max(hi.lat, bboxes_[z].second.lat);
            hi.lon = std::max(hi.lon, bboxes_[z].second.lon);
        }
        auto& b = zone_buckets_;
        if (lo.lat <= hi.lat) {
            b.n_lat = b.n_lon = 128;
            b.origin = lo;
            b.step_lat = std::max((hi.lat - lo.lat) / b.n_lat, 1e-9) * (1.0 + 1e-9);
            b.step_lon = std::max((hi.lon - lo.lon) / b.n_lon, 1e-9) * (1.0 + 1e-9);
            b.items.assign(static_cast<std::size_t>(b.n_lat * b.n_lon), {});
            for (std::size_t z = 0; z < census_.size(); ++z) {
                if (!usable_[z])
                    continue;
                const int i0 = std::max(0, static_cast<int>((bboxes_[z].first.lat - lo.lat) / b.step_lat));
                const int i1 = std::min(b.n_lat - 1, static_cast<int>((bboxes_[z].second.lat - lo.lat) / b.step_lat));
                const int j0 = std::max(0, static_cast<int>((bboxes_[z].first.lon - lo.lon) / b.step_lon));
                const int j1 = std::min(b.n_lon - 1, static_cast<int>((bboxes_[z].second.lon - lo.lon) / b.step_lon));
                for (int i = i0; i <= i1; ++i)
                    for (int j = j0; j <= j1; ++j)
                        b.items[static_cast<std::size_t>(i * b.n_lon + j)].push_back(static_cast<int>(z));
            }
        }
    }

    // Grid-cell buckets of about 1 km.
    if (!cells_.empty()) {
        GeoPoint lo{90.0, 180.0};
        GeoPoint hi{-90.0, -180.0};
        for (const auto& c : cells_) {
            lo.lat = std::min(lo.lat, c.centroid.lat);
            lo.lon = std::min(lo.lon, c.centroid.lon);
            hi.lat = std::max(hi.lat, c.centroid.lat);
            hi.lon = std::max(hi.lon, c.centroid.lon);
        }
        const double pad_lat = 600.0 / kMetersPerDegree;
        const double pad_lon = pad_lat / std::max(0.05, std::cos(hi.lat * std::numbers::pi / 180.0));
        lo.lat -= pad_lat;
        lo.lon -= pad_lon;
        hi.lat += pad_lat;
        hi.lon += pad_lon;
        auto& b = cell_buckets_;
        b.origin = lo;
        b.step_lat = 1000.0 / kMetersPerDegree;
        b.step_lon = b.step_lat / std::max(0.05, std::cos((lo.lat + hi.lat) / 2.0 * std::numbers::pi / 180.0));
        b.n_lat = static_cast<int>((hi.lat - lo.lat) / b.step_lat) + 1;
        b.n_lon = static_cast<int>((hi.lon - lo.lon) / b.step_lon) + 1;
        b.items.assign(static_cast<std::size_t>(b.n_lat) * static_cast<std::size_t>(b.n_lon), {});
        for (std::size_t k = 0; k < cells_.size(); ++k) {
            const auto& c = cells_[k];
            const double half_lat = (c.size_m / 2.0 + 1.0) / kMetersPerDegree;
            const double half_lon = half_lat / std::cos(c.centroid.lat * std::numbers::pi / 180.0);
            const int i0 = std::max(0, static_cast<int>((c.centroid.lat - half_lat - lo.lat) / b.step_lat));
            const int i1 = std::min(b.n_lat - 1, static_cast<int>((c.centroid.lat + half_lat - lo.lat) / b.step_lat));
            const int j0 = std::max(0, static_cast<int>((c.centroid.lon - half_lon - lo.lon) / b.step_lon));
            const int j1 = std::min(b.n_lon - 1, static_cast<int>((c.centroid.lon + half_lon - lo.lon) / b.step_lon));
            for (int i = i0; i <= i1; ++i)
                for (int j = j0; j <= j1; ++j)
                    b.items[static_cast<std::size_t>(i) * static_cast<std::size_t>(b.n_lon) +
                            static_cast<std::size_t>(j)]
                        .push_back(static_cast<int>(k));
        }
    }
}

std::optional<int> Zoning::census_zone(GeoPoint p) const
{
    const auto b = zone_buckets_.bucket(p);
    if (!b)
        return std::nullopt;
    for (int z : zone_buckets_.items[*b]) {
        const auto& [lo, hi] = bboxes_[static_cast<std::size_t>(z)];
        if (p.lat < lo.lat || p.lat > hi.lat || p.lon < lo.lon || p.lon > hi.lon)
            continue;
        if (census_[static_cast<std::size_t>(z)].geometry.contains(p))
            return z;
    }
    return std::nullopt;
}

std::optional<int> Zoning::census_zone_brute_force(GeoPoint p) const
{
    for (std::size_t z = 0; z < census_.size(); ++z)
        if (usable_[z] && census_[z].geometry.contains(p))
            return static_cast<int>(z);
    return std::nullopt;
}

int Zoning::hex_lookup(int z, GeoPoint p) const
{
    const HexGrid& g = grids_[static_cast<std::size_t>(z)];
    const auto xy = g.proj.forward(p);
    const auto [q, r] = hex_round(xy, g.size);
    if (auto it = g.cells.find(hex_key(q, r)); it != g.cells.end())
        return it->second;
    // The point lies in a hexagon whose centre is outside the zone: take the
    // nearest child by centre distance (ties to the lower id).
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    auto consider = [&](int qq, int rr, int id) {
        const auto c = hex_center(qq, rr, g.size);
        const double d = std::hypot(c.x - xy.x, c.y - xy.y);
        if (d < best_d || (d == best_d && id < best)) {
            best_d = d;
            best = id;
        }
    };
    for (int k = 1; k <= 3 && best < 0; ++k)
        for (int dq = -k; dq <= k; ++dq)
            for (int dr = std::max(-k, -dq - k); dr <= std::min(k, -dq + k); ++dr)
                if (auto it = g.cells.find(hex_key(q + dq, r + dr)); it != g.cells.end())
                    consider(q + dq, r + dr, it->second);
    if (best >= 0)
        return best;
    for (const auto& [key, id] : g.cells) {
        const int qq = static_cast<int>(key >> 32);
        const int rr = static_cast<int>(static_cast<std::int32_t>(key & 0xFFFFFFFF));
        consider(qq, rr, id);
    }
    return best;
}

std::optional<int> Zoning::analysis_zone(GeoPoint p) const
{
    const auto z = census_zone(p);
    if (!z)
        return std::nullopt;
    const HexGrid& g = grids_[static_cast<std::size_t>(*z)];
    if (g.cells.empty())
        return g.first;
    return hex_lookup(*z, p);
}

std::vector<int> Zoning::children(int census_zone) const
{
    const HexGrid& g = grids_[static_cast<std::size_t>(census_zone)];
    std::vector<int> out;
    for (int i = 0; i < g.count; ++i)
        out.push_back(g.first + i);
    return out;
}

double Zoning::cell_distance(int k, GeoPoint p) const
{
    const auto& c = cells_[static_cast<std::size_t>(k)];
    const double dy = (p.lat - c.centroid.lat) * kMetersPerDegree;
    const double dx = (p.lon - c.centroid.lon) * kMetersPerDegree * std::cos(c.centroid.lat * std::numbers::pi / 180.0);
    return std::max(std::abs(dx), std::abs(dy)) / (c.size_m / 2.0);
}

std::optional<int> Zoning::grid_cell(GeoPoint p) const
{
    if (cells_.empty())
        return std::nullopt;
    const auto b = cell_buckets_.bucket(p);
    if (!b)
        return std::nullopt;
    int best = -1;
    double best_d = 0.0;
    for (int k : cell_buckets_.items[*b]) {
        const double d = cell_distance(k, p);
        if (d > 1.0 + 1e-9)
            continue;
        if (best < 0 || d < best_d ||
            (d == best_d && cells_[static_cast<std::size_t>(k)].size_m < cells_[static_cast<std::size_t>(best)].size_m) ||
            (d == best_d && cells_[static_cast<std::size_t>(k)].size_m == cells_[static_cast<std::size_t>(best)].size_m &&
             k < best)) {
            best = k;
            best_d = d;
        }
    }
    if (best < 0)
        return std::nullopt;
    return best;
}

std::optional<int> Zoning::grid_cell_brute_force(GeoPoint p) const
{
    int best = -1;
    double best_d = 0.0;
    for (int k = 0; k < static_cast<int>(cells_.size()); ++k) {
        const double d = cell_distance(k, p);
        if (d > 1.0 + 1e-9)
            continue;
        const int size = cells_[static_cast<std::size_t>(k)].size_m;
        if (best < 0 || d < best_d || (d == best_d && size < cells_[static_cast<std::size_t>(best)].size_m)) {
            best = k;
            best_d = d;
        }
    }
    if (best < 0)
        return std::nullopt;
    return best;
}

void Zoning::write_csv(const std::string& path) const
{
    CsvWriter w(path);
    w.header({"zone_id", "parent", "resolution", "area"});
    for (const auto& z : zones_) {
        w.text(z.id).text(census_[static_cast<std::size_t>(z.parent)].id);
        if (z.resolution == 0)
            w.text("parent");
        else
            w.integer(z.resolution);
        w.real(z.area_km2);
        w.end_row();
    }
    w.close();
}

} // namespace mobiseg
