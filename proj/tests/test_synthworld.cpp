#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mobiseg/common.hpp"
#include "mobiseg/config.hpp"
#include "mobiseg/segregation.hpp"
#include "mobiseg/stays.hpp"
#include "mobiseg/synthworld.hpp"
#include "mobiseg/zoning.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace mobiseg;

namespace {

WorldConfig small(std::uint64_t seed = 3)
{
    WorldConfig c;
    c.seed = seed;
    c.n_zones = 60;
    c.n_agents = 400;
    c.n_pois = 800;
    c.days = 28;
    return c;
}

double median_of(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

TEST_CASE("generation is deterministic in the seed")
{
    const auto c = small();
    const World a = gen_world(c);
    const World b = gen_world(c);
    REQUIRE(a.zones.size() == b.zones.size());
    for (std::size_t z = 0; z < a.zones.size(); ++z) {
        CHECK(a.zones[z].id == b.zones[z].id);
        CHECK(a.zones[z].composition.native == b.zones[z].composition.native);
        CHECK(a.zones[z].composition.foreign == b.zones[z].composition.foreign);
    }
    REQUIRE(a.agents.size() == b.agents.size());
    for (std::size_t k = 0; k < a.agents.size(); ++k) {
        CHECK(a.agents[k].home == b.agents[k].home);
        CHECK(a.agents[k].anchors == b.agents[k].anchors);
    }
    const Trajectories ta = gen_trajectories(a, c);
    const Trajectories tb = gen_trajectories(b, c);
    CHECK(ta.fixes.fixes == tb.fixes.fixes);
    CHECK(ta.visits == tb.visits);

    const World other = gen_world(small(4));
    CHECK(other.agents[0].home != a.agents[0].home);
}

TEST_CASE("world is well formed")
{
    const auto c = small();
    const World w = gen_world(c);
    CHECK(static_cast<int>(w.zones.size()) >= c.n_zones);
    CHECK(static_cast<int>(w.pois.size()) == c.n_pois);
    CHECK(static_cast<int>(w.agents.size()) == c.n_agents);
    CHECK(std::is_sorted(w.pois.begin(), w.pois.end(), [](const auto& x, const auto& y) { return x.id < y.id; }));
    const Zoning zoning(w.zones, w.cells);
    for (const auto& ag : w.agents) {
        const auto z = zoning.census_zone(ag.home);
        REQUIRE(z);
        CHECK(*z == ag.home_zone);
        CHECK(zoning.grid_cell(ag.home));
    }
    for (const auto& p : w.pois)
        CHECK(zoning.census_zone(p.point));
}

TEST_CASE("noiseless trajectories give back the planted visits")
{
    auto c = small(5);
    c.jitter_m = 0.0;
    c.dropout = 0.0;
    const World w = gen_world(c);
    const Trajectories t = gen_trajectories(w, c);
    const StaySet stays = detect_stays(t.fixes, StayParams{});
    REQUIRE(stays.device_count() == w.agents.size());
    std::size_t visits = 0;
    for (std::size_t k = 0; k < w.agents.size(); ++k) {
        const auto got = stays.device(k);
        const auto& want = t.visits[k];
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i) {
            CHECK(got[i].center == want[i].point);
            CHECK(got[i].start == want[i].start);
            CHECK(got[i].end == want[i].end);
        }
        visits += want.size();
    }
    CHECK(visits > 10 * w.agents.size());
}

TEST_CASE("residential sorting strength")
{
    auto c = small(6);
    c.population_per_agent = 200.0;
    SUBCASE("no sorting gives national mixes")
    {
        c.lambda_res = 0.0;
        const World w = gen_world(c);
        std::vector<double> ice;
        for (const auto& z : w.zones)
            if (auto v = ice_adjusted(z.composition, c.shares))
                ice.push_back(std::abs(*v));
        CHECK(median_of(ice) < 0.05);
    }
    SUBCASE("full sorting gives single-group zones")
    {
        c.lambda_res = 1.0;
        const World w = gen_world(c);
        std::size_t pure = 0;
        for (const auto& z : w.zones) {
            const auto& m = z.composition;
            const int groups = (m.native > 0) + (m.foreign > 0) + (m.other > 0);
            pure += groups == 1 ? 1 : 0;
        }
        CHECK(pure == w.zones.size());
    }
    SUBCASE("realized shares follow the national shares")
    {
        const World w = gen_world(c);
        double n = 0;
        double f = 0;
        double o = 0;
        for (const auto& z : w.zones) {
            n += z.composition.native;
            f += z.composition.foreign;
            o += z.composition.other;
        }
        const double total = n + f + o;
        CHECK(std::abs(n / total - c.shares.native) < 0.01);
        CHECK(std::abs(f / total - c.shares.foreign) < 0.01);
        CHECK(std::abs(o / total - c.shares.other) < 0.01);
    }
}

TEST_CASE("steeper distance decay shortens the mobility range")
{
    auto c = small(7);
    c.lambda_res = 0.8;
    c.decay = {3.5, 1.2, 1.2};
    const World w = gen_world(c);
    const Trajectories t = gen_trajectories(w, c);
    std::vector<double> f;
    std::vector<double> n;
    for (std::size_t k = 0; k < w.agents.size(); ++k) {
        std::vector<GeoPoint> pts;
        for (const auto& v : t.visits[k])
            pts.push_back(v.point);
        const std::vector<double> ones(pts.size(), 1.0);
        const auto rg = radius_of_gyration_km(pts, ones);
        if (!rg)
            continue;
        if (w.agents[k].group == Group::F)
            f.push_back(*rg);
        else if (w.agents[k].group == Group::N)
            n.push_back(*rg);
    }
    REQUIRE(f.size() > 10);
    REQUIRE(n.size() > 10);
    CHECK(median_of(f) < 0.6 * median_of(n));
}

TEST_CASE("detected homes match the planted homes")
{
    auto c = small(8);
    c.days = 42;
    const World w = gen_world(c);
    const Trajectories t = gen_trajectories(w, c);
    const StaySet stays = detect_stays(t.fixes, StayParams{});
    const Zoning zoning(w.zones, w.cells);
    const auto profiles = filter_individuals(stays, zoning, w.calendar, c.clock, FilterRules{});
    REQUIRE(profiles.size() >= w.agents.size() * 95 / 100);
    std::size_t same = 0;
    for (const auto& p : profiles) {
        const auto& ag = w.agents[static_cast<std::size_t>(p.device)];
        same += zoning.grid_cell(ag.home) == p.home_cell ? 1 : 0;
    }
    CHECK(same >= profiles.size() * 99 / 100);
}

TEST_CASE("world config table")
{
    const auto cfg = Config::parse("[world]\nseed = 9\nagents = 50\nlambda_res = 0.3\ndecay = [2.5, 1.5, 1.5]\n"
                                   "observe = [0.2, 0.4]\n");
    const auto c = WorldConfig::from_config(cfg);
    CHECK(c.seed == 9);
    CHECK(c.n_agents == 50);
    CHECK(c.lambda_res == 0.3);
    CHECK(c.decay[0] == 2.5);
    CHECK(c.observe_min == 0.2);
    CHECK(c.observe_max == 0.4);
    CHECK_THROWS_AS(WorldConfig::from_config(Config::parse("[world]\nlambda_res = 1.5\n")), InputError);
    CHECK_THROWS_AS(WorldConfig::from_config(Config::parse("[world]\nagents = 0\n")), InputError);
}

TEST_CASE("written world round-trips through the readers")
{
    auto c = small(10);
    c.n_agents = 30;
    c.days = 10;
    const World w = gen_world(c);
    const Trajectories t = gen_trajectories(w, c);
    const auto dir = std::filesystem::temp_directory_path() / "mobiseg_synth_test";
    std::filesystem::remove_all(dir);
    write_world(w, t, dir.string());
    CHECK(read_fixes((dir / "fixes.csv").string(), 0.0).fixes == t.fixes.fixes);
    const auto zones = read_zones((dir / "zones.csv").string());
    REQUIRE(zones.size() == w.zones.size());
    CHECK(zones[0].id == w.zones[0].id);
    const auto pois = read_pois((dir / "pois.csv").string(), w.categories);
    REQUIRE(pois.size() == w.pois.size());
    CHECK(pois[0].point == w.pois[0].point);
    const auto gtfs = read_gtfs((dir / "gtfs").string());
    CHECK(!gtfs.connections.empty());
    CHECK(std::filesystem::exists(dir / "truth_agents.csv"));
    CHECK(std::filesystem::exists(dir / "truth_visits.csv"));
    std::filesystem::remove_all(dir);
}
