#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mobiseg/common.hpp"
#include "mobiseg/rng.hpp"
#include "mobiseg/stays.hpp"
#include "mobiseg/zoning.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

using namespace mobiseg;

namespace {

const GeoPoint kCenter{57.70, 11.97};
constexpr Timestamp kMonday = 1567375200; // 2019-09-02 00:00 local

GeoPoint at(double east_m, double north_m) { return LocalProjection(kCenter).inverse({east_m, north_m}); }

void dwell(std::vector<Fix>& out, GeoPoint p, Timestamp start, int minutes, int step_min = 5)
{
    for (int m = 0; m <= minutes; m += step_min)
        out.push_back({p, start + m * 60});
}

Stay stay(int label, GeoPoint p, Timestamp start, Timestamp end)
{
    Stay s;
    s.label = label;
    s.center = p;
    s.start = start;
    s.end = end;
    s.weight = 1.0;
    return s;
}

Timestamp day(int d, int hour, int minute = 0) { return kMonday + d * 86400 + hour * 3600 + minute * 60; }

} // namespace

TEST_CASE("stay detection examples")
{
    const StayParams params;
    SUBCASE("twenty minutes at one point")
    {
        std::vector<Fix> f;
        dwell(f, kCenter, kMonday, 20);
        const auto s = detect_stays(f, params);
        REQUIRE(s.size() == 1);
        CHECK(s[0].start == kMonday);
        CHECK(s[0].end == kMonday + 1200);
        CHECK(s[0].center == kCenter);
    }
    SUBCASE("two short dwells")
    {
        std::vector<Fix> f;
        dwell(f, kCenter, kMonday, 10);
        dwell(f, at(1000, 0), kMonday + 1200, 10);
        CHECK(detect_stays(f, params).empty());
    }
    SUBCASE("a long gap splits one place into two stays")
    {
        std::vector<Fix> f;
        dwell(f, kCenter, kMonday, 30);
        dwell(f, kCenter, kMonday + 1800 + 4 * 3600, 30);
        const auto s = detect_stays(f, params);
        REQUIRE(s.size() == 2);
        CHECK(s[0].label == s[1].label);
    }
    SUBCASE("fewer than two fixes")
    {
        std::vector<Fix> f{{kCenter, kMonday}};
        CHECK(detect_stays(f, params).empty());
        CHECK(detect_stays(std::span<const Fix>{}, params).empty());
    }
    SUBCASE("stays over twelve hours are removed")
    {
        std::vector<Fix> f;
        dwell(f, kCenter, kMonday, 13 * 60, 10);
        CHECK(detect_stays(f, params).empty());
    }
    SUBCASE("labels follow first appearance")
    {
        std::vector<Fix> f;
        dwell(f, at(500, 0), kMonday, 30);
        dwell(f, kCenter, kMonday + 3600, 30);
        dwell(f, at(510, 5), kMonday + 7200, 30);
        const auto s = detect_stays(f, params);
        REQUIRE(s.size() == 3);
        CHECK(s[0].label == 0);
        CHECK(s[1].label == 1);
        CHECK(s[2].label == 0);
    }
}

TEST_CASE("parameter validation")
{
    StayParams p;
    CHECK_NOTHROW(p.validate());
    p.r1_m = 2000;
    CHECK_THROWS_AS(p.validate(), InputError);
    p = {};
    p.t_min_minutes = 720;
    CHECK_THROWS_AS(p.validate(), InputError);
    p = {};
    p.t_max_hours = 0;
    CHECK_THROWS_AS(p.validate(), InputError);
}

TEST_CASE("randomized traces agree with the brute-force reference")
{
    const StayParams params;
    int total_stays = 0;
    for (int trace = 0; trace < 500; ++trace) {
        Stream rng(derive_key(11, {static_cast<std::uint64_t>(trace)}));
        const int n = 2 + static_cast<int>(rng.below(199));
        std::vector<Fix> f;
        Timestamp t = kMonday;
        PlanarPoint anchor{0, 0};
        const double noise = rng.uniform(2.0, 25.0);
        for (int k = 0; k < n; ++k) {
            if (rng.uniform() < 0.08)
                anchor = {rng.uniform(-3000, 3000), rng.uniform(-3000, 3000)};
            if (rng.uniform() < 0.05)
                t += static_cast<Timestamp>(rng.uniform(3, 5) * 3600);
            else
                t += 60 + static_cast<Timestamp>(rng.below(600));
            f.push_back({at(anchor.x + rng.normal() * noise, anchor.y + rng.normal() * noise), t});
        }
        const auto fast = detect_stays(f, params);
        const auto slow = detect_stays_brute_force(f, params);
        REQUIRE(fast == slow);
        total_stays += static_cast<int>(fast.size());

        // Stays are time-disjoint and every member lies within r1 of the centre.
        for (std::size_t k = 0; k < fast.size(); ++k) {
            CHECK(fast[k].duration_minutes() >= params.t_min_minutes);
            CHECK(fast[k].duration_minutes() <= 12 * 60);
            if (k > 0)
                CHECK(fast[k].start > fast[k - 1].end);
            for (const auto& x : f)
                if (x.t >= fast[k].start && x.t <= fast[k].end)
                    CHECK(haversine_m(x.point, fast[k].center) <= params.r1_m);
        }
    }
    CHECK(total_stays > 300);
}

TEST_CASE("planted visits are recovered from noiseless trajectories")
{
    const StayParams params;
    for (int trace = 0; trace < 50; ++trace) {
        Stream rng(derive_key(12, {static_cast<std::uint64_t>(trace)}));
        std::vector<Fix> f;
        std::vector<Stay> planted;
        std::vector<GeoPoint> places;
        for (int k = 0; k < 5; ++k)
            places.push_back(at(k * 800.0, rng.uniform(-2000, 2000)));
        Timestamp t = kMonday;
        int prev = -1;
        for (int v = 0; v < 12; ++v) {
            int p = static_cast<int>(rng.below(5));
            if (p == prev)
                p = (p + 1) % 5;
            prev = p;
            const int minutes = 15 + 5 * static_cast<int>(rng.below(30));
            dwell(f, places[static_cast<std::size_t>(p)], t, minutes);
            planted.push_back(stay(p, places[static_cast<std::size_t>(p)], t, t + minutes * 60));
            t += minutes * 60 + 600;
        }
        const auto found = detect_stays(f, params);
        REQUIRE(found.size() == planted.size());
        for (std::size_t k = 0; k < found.size(); ++k) {
            CHECK(found[k].start == planted[k].start);
            CHECK(found[k].end == planted[k].end);
            CHECK(found[k].center == planted[k].center);
            for (std::size_t m = 0; m < k; ++m)
                CHECK((found[k].label == found[m].label) == (planted[k].label == planted[m].label));
        }
    }
}

TEST_CASE("isolated noise fixes do not change the result")
{
    const StayParams params;
    std::vector<Fix> f;
    dwell(f, kCenter, kMonday + 3600, 40);
    dwell(f, at(900, 0), kMonday + 7200, 40);
    const auto base = detect_stays(f, params);
    std::vector<Fix> g{{at(-600, 300), kMonday}, {at(-300, -500), kMonday + 1800}};
    g.insert(g.end(), f.begin(), f.end());
    g.push_back({at(3000, 3000), kMonday + 12000});
    g.push_back({at(-3000, 3000), kMonday + 12300});
    CHECK(detect_stays(g, params) == base);
}

TEST_CASE("location labels match the brute-force components on large sets")
{
    Stream rng(derive_key(13, {}));
    std::vector<Stay> stays;
    for (int k = 0; k < 400; ++k)
        stays.push_back(stay(0, at(rng.uniform(-500, 500), rng.uniform(-500, 500)), kMonday + k * 3600,
                             kMonday + k * 3600 + 1800));
    auto fast = stays;
    label_locations(fast, 30.0);
    // Reference: transitive closure by repeated relaxation.
    std::vector<int> comp(stays.size());
    for (std::size_t i = 0; i < comp.size(); ++i)
        comp[i] = static_cast<int>(i);
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < stays.size(); ++i)
            for (std::size_t j = 0; j < stays.size(); ++j)
                if (haversine_m(stays[i].center, stays[j].center) <= 30.0 && comp[j] < comp[i]) {
                    comp[i] = comp[j];
                    changed = true;
                }
    }
    for (std::size_t i = 0; i < stays.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            CHECK((fast[i].label == fast[j].label) == (comp[i] == comp[j]));
}

TEST_CASE("home detection")
{
    const HolidayCalendar none;
    SUBCASE("single location")
    {
        std::vector<Stay> s{stay(4, kCenter, day(0, 9), day(0, 10))};
        CHECK(detect_home(s, none) == 4);
    }
    SUBCASE("night visits decide among the top three")
    {
        std::vector<Stay> s;
        for (int d = 0; d < 5; ++d)
            s.push_back(stay(1, kCenter, day(d, 9), day(d, 12)));
        for (int d = 0; d < 5; ++d)
            s.push_back(stay(1, kCenter, day(d, 13), day(d, 17)));
        for (int d = 0; d < 3; ++d)
            s.push_back(stay(2, kCenter, day(d, 20), day(d, 23)));
        s.push_back(stay(3, kCenter, day(0, 18), day(0, 19)));
        CHECK(detect_home(s, none) == 2);
        std::reverse(s.begin(), s.end());
        CHECK(detect_home(s, none) == 2);
        Stream rng(derive_key(14, {}));
        for (int k = 0; k < 10; ++k) {
            shuffle(std::span<Stay>(s), rng);
            CHECK(detect_home(s, none) == 2);
        }
    }
    SUBCASE("ties on night visits go to the lower label")
    {
        std::vector<Stay> s{stay(7, kCenter, day(0, 23), day(1, 1)), stay(5, kCenter, day(1, 23), day(2, 1))};
        CHECK(detect_home(s, none) == 5);
    }
    SUBCASE("only holiday stays")
    {
        const HolidayCalendar cal({{parse_date("2019-09-01"), parse_date("2019-09-30")}});
        std::vector<Stay> s{stay(1, kCenter, day(0, 23), day(1, 1))};
        CHECK_FALSE(detect_home(s, cal).has_value());
    }
    SUBCASE("night window")
    {
        const LocalClock clock;
        CHECK(touches_night(day(0, 21), day(0, 22, 1), clock));
        CHECK_FALSE(touches_night(day(0, 21), day(0, 22), clock));
        CHECK(touches_night(day(0, 5), day(0, 7), clock));
        CHECK_FALSE(touches_night(day(0, 6), day(0, 21), clock));
    }
}

namespace {

Zoning small_world()
{
    CensusZone z;
    z.id = "1480C0001";
    LocalProjection proj(kCenter);
    z.geometry.rings = {{proj.inverse({-3000, -3000}), proj.inverse({3000, -3000}), proj.inverse({3000, 3000}),
                         proj.inverse({-3000, 3000}), proj.inverse({-3000, -3000})}};
    z.area_km2 = z.geometry.area_km2();
    z.population = 500;
    GridCell c;
    c.id = "g1";
    c.size_m = 1000;
    c.centroid = kCenter;
    return Zoning({z}, {c});
}

StaySet one_device(std::vector<Stay> s)
{
    StaySet set;
    set.device_ids = {"dev"};
    set.stays = std::move(s);
    set.offsets = {0, set.stays.size()};
    return set;
}

/// Evenings at home on `nights` days, daytime stays at two other places on
/// every one of `days` days.
std::vector<Stay> routine(GeoPoint home, int nights, int days)
{
    std::vector<Stay> s;
    for (int d = 0; d < days; ++d) {
        s.push_back(stay(1, at(1500, 0), day(d, 9), day(d, 12)));
        s.push_back(stay(2, at(-1500, 0), day(d, 13), day(d, 16)));
        if (d < nights)
            s.push_back(stay(0, home, day(d, 19), day(d, 23, 30)));
    }
    std::sort(s.begin(), s.end(), [](const Stay& a, const Stay& b) { return a.start < b.start; });
    return s;
}

} // namespace

TEST_CASE("individual filtering")
{
    const Zoning zn = small_world();
    const HolidayCalendar none;
    SUBCASE("retained at the boundary")
    {
        const auto p = filter_individuals(one_device(routine(kCenter, 3, 8)), zn, none);
        REQUIRE(p.size() == 1);
        CHECK(p[0].home_label == 0);
        CHECK(p[0].home_nights == 3);
        CHECK(p[0].active_days == 8);
        CHECK(p[0].unique_locations == 3);
        CHECK(p[0].home_cell == 0);
        CHECK(p[0].home_census_zone == 0);
    }
    SUBCASE("two home nights")
    {
        CHECK(filter_individuals(one_device(routine(kCenter, 2, 8)), zn, none).empty());
    }
    SUBCASE("seven active days")
    {
        CHECK(filter_individuals(one_device(routine(kCenter, 3, 7)), zn, none).empty());
    }
    SUBCASE("home outside every grid cell")
    {
        CHECK(filter_individuals(one_device(routine(at(800, 800), 3, 8)), zn, none).empty());
    }
    SUBCASE("two locations")
    {
        auto s = routine(kCenter, 8, 8);
        std::erase_if(s, [](const Stay& x) { return x.label == 2; });
        CHECK(filter_individuals(one_device(s), zn, none).empty());
    }
}

TEST_CASE("radius of gyration")
{
    std::vector<GeoPoint> one{kCenter};
    std::vector<double> w1{2.0};
    CHECK(*radius_of_gyration_km(one, w1) == doctest::Approx(0.0).epsilon(1e-9));

    std::vector<GeoPoint> two{at(-1000, 0), at(1000, 0)};
    std::vector<double> w2{1.0, 1.0};
    CHECK(*radius_of_gyration_km(two, w2) == doctest::Approx(1.0).epsilon(1e-6));

    std::vector<double> zero{0.0, 0.0};
    CHECK_FALSE(radius_of_gyration_km(two, zero).has_value());

    // Direct evaluation with an explicit Cartesian centroid and arc lengths.
    Stream rng(derive_key(15, {}));
    std::vector<GeoPoint> pts;
    std::vector<double> w;
    for (int k = 0; k < 50; ++k) {
        pts.push_back({57.0 + rng.uniform(0, 2), 11.0 + rng.uniform(0, 3)});
        w.push_back(rng.uniform(0.1, 5.0));
    }
    const double rad = std::numbers::pi / 180.0;
    double cx = 0, cy = 0, cz = 0, tw = 0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        cx += w[k] * std::cos(pts[k].lat * rad) * std::cos(pts[k].lon * rad);
        cy += w[k] * std::cos(pts[k].lat * rad) * std::sin(pts[k].lon * rad);
        cz += w[k] * std::sin(pts[k].lat * rad);
        tw += w[k];
    }
    const double norm = std::sqrt(cx * cx + cy * cy + cz * cz);
    cx /= norm;
    cy /= norm;
    cz /= norm;
    double ss = 0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const double px = std::cos(pts[k].lat * rad) * std::cos(pts[k].lon * rad);
        const double py = std::cos(pts[k].lat * rad) * std::sin(pts[k].lon * rad);
        const double pz = std::sin(pts[k].lat * rad);
        const double d = kEarthRadiusM / 1000.0 * std::atan2(std::sqrt(std::pow(py * cz - pz * cy, 2) +
                                                                       std::pow(pz * cx - px * cz, 2) +
                                                                       std::pow(px * cy - py * cx, 2)),
                                                             px * cx + py * cy + pz * cz);
        ss += w[k] * d * d;
    }
    CHECK(*radius_of_gyration_km(pts, w) == doctest::Approx(std::sqrt(ss / tw)).epsilon(1e-9));
}

TEST_CASE("stay sets are deterministic across worker counts and survive a round trip")
{
    FixSet fixes;
    for (int d = 0; d < 20; ++d) {
        Stream rng(derive_key(16, {static_cast<std::uint64_t>(d)}));
        std::vector<Fix> f;
        Timestamp t = kMonday;
        for (int k = 0; k < 300; ++k) {
            t += 60 + static_cast<Timestamp>(rng.below(600));
            f.push_back({at(rng.below(3) * 700.0 + rng.normal() * 8, rng.normal() * 8), t});
        }
        fixes.add_device("d" + std::to_string(100 + d), f);
    }
    const StayParams params;
    set_workers(1);
    const auto a = detect_stays(fixes, params);
    set_workers(4);
    const auto b = detect_stays(fixes, params);
    set_workers(1);
    CHECK(a.stays == b.stays);
    CHECK(a.offsets == b.offsets);
    CHECK(a.stays.size() > 20);

    const auto path = (std::filesystem::temp_directory_path() / "mobiseg_test_stays.csv").string();
    write_stays(a, path);
    const auto c = read_stays(path);
    REQUIRE(c.stays.size() == a.stays.size());
    for (std::size_t k = 0; k < a.stays.size(); ++k) {
        CHECK(c.stays[k].label == a.stays[k].label);
        CHECK(c.stays[k].start == a.stays[k].start);
        CHECK(c.stays[k].center.lat == doctest::Approx(a.stays[k].center.lat).epsilon(1e-7));
    }
    std::filesystem::remove(path);
}
