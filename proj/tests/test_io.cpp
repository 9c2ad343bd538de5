#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mobiseg/common.hpp"
#include "mobiseg/config.hpp"
#include "mobiseg/csv.hpp"
#include "mobiseg/formats.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mobiseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir()
    {
        static int counter = 0;
        path = fs::temp_directory_path() / ("mobiseg_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const
    {
        std::ofstream(path / name) << content;
        return (path / name).string();
    }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kSquare = "\"[[[11.0,57.0],[11.01,57.0],[11.01,57.01],[11.0,57.01],[11.0,57.0]]]\"";

} // namespace

TEST_CASE("csv line splitting")
{
    std::vector<std::string_view> f;
    std::string scratch;
    split_csv_line("a,b,,c", f, scratch);
    CHECK(f == std::vector<std::string_view>{"a", "b", "", "c"});
    split_csv_line("x,\"he said \"\"hi\"\", ok\",3\r", f, scratch);
    REQUIRE(f.size() == 3);
    CHECK(f[1] == "he said \"hi\", ok");
    CHECK(f[2] == "3");
    CHECK_THROWS_AS(split_csv_line("\"open", f, scratch), InputError);
}

TEST_CASE("read_fixes")
{
    set_quiet(true);
    TempDir dir;
    SUBCASE("empty file")
    {
        const auto fixes = read_fixes(dir.file("empty.csv", ""));
        CHECK(fixes.device_count() == 0);
        const auto header_only = read_fixes(dir.file("h.csv", "id,lat,lon,timestamp\n"));
        CHECK(header_only.device_count() == 0);
    }
    SUBCASE("grouped and time sorted")
    {
        const auto fixes = read_fixes(dir.file("f.csv", "id,lat,lon,timestamp\n"
                                                        "b,57.7,11.9,300\n"
                                                        "a,57.7,11.9,200\n"
                                                        "b,57.7,11.9,100\n"
                                                        "a,57.71,11.9,2019-09-02T08:00:00Z\n"));
        REQUIRE(fixes.device_count() == 2);
        CHECK(fixes.device_ids[0] == "a");
        CHECK(fixes.device(0).size() == 2);
        CHECK(fixes.device(0)[0].t == 200);
        CHECK(fixes.device(0)[1].t == 1567411200);
        CHECK(fixes.device(1)[0].t == 100);
        CHECK(fixes.device(1)[1].t == 300);
    }
    SUBCASE("malformed rows are counted")
    {
        std::string text = "id,lat,lon,timestamp\nx,91,11.9,100\n";
        for (int i = 0; i < 20; ++i)
            text += "x,57.7,11.9," + std::to_string(1000 + i) + "\n";
        ReadReport rep;
        const auto fixes = read_fixes(dir.file("m.csv", text), 0.1, &rep);
        CHECK(rep.rows == 21);
        CHECK(rep.malformed == 1);
        CHECK(fixes.fixes.size() == 20);
        CHECK_THROWS_AS(read_fixes(dir.file("bad.csv", "id,lat,lon,timestamp\nx,1,2,3\nx,nan,2,3\ny,1,2\n")),
                        InputError);
    }
    SUBCASE("round trip")
    {
        FixSet s;
        const Fix a[] = {{{57.1234567, 11.7654321}, 10}, {{57.2, 11.8}, 20}};
        s.add_device("dev1", a);
        write_fixes(s, dir / "rt.csv");
        const auto back = read_fixes(dir / "rt.csv");
        CHECK(back.device_ids == s.device_ids);
        CHECK(back.fixes == s.fixes);
    }
    CHECK_THROWS_AS(read_fixes(dir / "missing.csv"), InputError);
}

TEST_CASE("read census zones and grids")
{
    set_quiet(true);
    TempDir dir;
    const std::string header = "zone_id,area_km2,population,native,foreign,other,geometry\n";
    const auto path = dir.file("zones.csv", header + "1480C1010,1.2,100,80,10,10," + kSquare + "\n" +
                                                "1480A1020,3.0,100,80,10,11," + kSquare + "\n" +
                                                "1480B1030,0,10,10,0,0," + kSquare + "\n" + "1480X1040,1,1,1,0,0," +
                                                kSquare + "\n");
    const auto zones = read_zones(path);
    REQUIRE(zones.size() == 1);
    CHECK(zones[0].id == "1480C1010");
    CHECK(zones[0].urbanity == Urbanity::urban);
    CHECK(zones[0].composition == Composition{80, 10, 10});
    CHECK(zones[0].geometry.contains({57.005, 11.005}));
    CHECK_FALSE(zones[0].geometry.contains({57.02, 11.005}));
    CHECK(zones[0].geometry.area_km2() == doctest::Approx(1.11 * 0.595).epsilon(0.01));

    const auto dup = dir.file("dup.csv", header + "1480C1010,1.2,100,80,10,10," + kSquare + "\n1480C1010,1.2,100,80,10,10," +
                                             kSquare + "\n");
    CHECK_THROWS_AS(read_zones(dup), InputError);

    CHECK(urbanity_of("0114A0010") == Urbanity::rural_suburban);
    CHECK(urbanity_of("0114B0010") == Urbanity::rural_suburban);
    CHECK_FALSE(urbanity_of("0114D0010"));
    CHECK_FALSE(urbanity_of("0114C001"));

    const auto grids = read_grids(dir.file("grids.csv", "cell_id,size_m,lat,lon,population,jobs,native,foreign,other\n"
                                                        "g1,250,57.0,11.0,0,5,0,0,0\n"
                                                        "g2,500,57.0,11.0,0,5,0,0,0\n"
                                                        "g3,1000,57.0,11.0,10,0,5,5,1\n"
                                                        "g4,1000,57.0,11.0,10,0,5,4,1\n"));
    REQUIRE(grids.size() == 2);
    CHECK(grids[0].id == "g1");
    CHECK(grids[0].jobs == 5);
    CHECK(grids[1].id == "g4");

    write_zones(zones, dir / "z2.csv");
    const auto again = read_zones(dir / "z2.csv");
    REQUIRE(again.size() == 1);
    CHECK(again[0].geometry.rings == zones[0].geometry.rings);
    write_grids(grids, dir / "g2.csv");
    CHECK(read_grids(dir / "g2.csv").size() == 2);
}

TEST_CASE("polygon even-odd rule with a hole")
{
    Polygon p;
    p.rings.push_back({{0, 0}, {0, 4}, {4, 4}, {4, 0}});
    p.rings.push_back({{1, 1}, {1, 2}, {2, 2}, {2, 1}});
    CHECK(p.contains({0.5, 0.5}));
    CHECK_FALSE(p.contains({1.5, 1.5}));
    CHECK_FALSE(p.contains({5, 5}));
    CHECK(polygon_from_json(R"({"type":"Polygon","coordinates":[[[0,0],[4,0],[4,4],[0,0]]]})").rings[0].size() == 4);
    CHECK_THROWS_AS(polygon_from_json("[[1,2]]"), InputError);
    Polygon flat;
    flat.rings.push_back({{0, 0}, {0, 1}, {0, 2}});
    CHECK(flat.degenerate());
}

TEST_CASE("category table and fallback ladder")
{
    const auto t = CategoryTable::standard();
    CHECK(t.size() == 33);
    const int food_a = *t.find("Food and Drink (a)");
    const int food_s = *t.find("Food and Drink (s)");
    const int office = *t.find("Office");
    const int office_s = *t.find("Office (s)");
    const int craft = *t.find("Craft");
    const int shop = *t.find("Shop");
    const int leisure = *t.find("Leisure");
    const int fashion = *t.find("Fashion and Accessories (s)");

    const auto& food = t.ladder(food_a);
    REQUIRE(food.size() == 3);
    CHECK(food[0] == std::vector<int>{food_a});
    CHECK(food[1] == std::vector<int>{food_a, food_s});
    CHECK(std::count(food[2].begin(), food[2].end(), shop) == 1);
    CHECK(std::count(food[2].begin(), food[2].end(), fashion) == 1);
    CHECK(std::count(food[2].begin(), food[2].end(), *t.find("Healthcare (a)")) == 0);

    const auto& c = t.ladder(craft);
    REQUIRE(c.size() == 3);
    CHECK(c[1] == std::vector<int>{craft, office, office_s});

    CHECK(t.ladder(leisure).size() == 1);
    const auto& sh = t.ladder(shop);
    REQUIRE(sh.size() == 2);
    CHECK(sh[1].size() == 15); // 14 "(s)" categories plus Shop
}

TEST_CASE("read_pois")
{
    set_quiet(true);
    TempDir dir;
    const auto t = CategoryTable::standard();
    const auto pois = read_pois(dir.file("pois.csv", "poi_id,lat,lon,class,subclass,category\n"
                                                     "p2,57.0,11.0,amenity,cafe,Food and Drink (a)\n"
                                                     "p1,57.0,11.0,shop,bakery,Food and Drink (s)\n"
                                                     "p3,57.0,11.0,amenity,cafe,Unknown\n"),
                                t);
    REQUIRE(pois.size() == 2);
    CHECK(pois[0].id == "p1");
    CHECK(t.name(pois[1].category) == "Food and Drink (a)");
    write_pois(pois, t, dir / "p.csv");
    CHECK(read_pois(dir / "p.csv", t).size() == 2);
}

TEST_CASE("read_gtfs subset")
{
    set_quiet(true);
    TempDir dir;
    const auto feed = dir.path / "feed";
    fs::create_directories(feed);
    auto put = [&](const std::string& name, const std::string& text) { std::ofstream(feed / name) << text; };
    put("stops.txt", "stop_id,stop_name,stop_lat,stop_lon\nA,A,57.0,11.0\nB,B,57.01,11.0\nC,C,57.02,11.0\n");
    put("trips.txt", "route_id,service_id,trip_id\nr,WK,t1\nr,WK,t2\nr,NONE,t3\n");
    put("calendar.txt", "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n"
                        "WK,1,1,1,1,1,0,0,20190101,20201231\nNONE,0,0,0,0,0,0,0,20190101,20201231\n");
    put("stop_times.txt", "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n"
                          "t1,08:00:00,08:00:00,A,1\nt1,08:20:00,08:20:00,B,2\n"
                          "t2,09:00:00,09:00:00,A,1\nt2,08:50:00,09:10:00,B,2\n"
                          "t3,10:00:00,10:00:00,A,1\nt3,10:10:00,10:10:00,C,2\n");
    const auto s = read_gtfs(feed.string());
    CHECK(s.stops.size() == 3);
    REQUIRE(s.connections.size() == 1);
    const auto& c = s.connections[0];
    CHECK(s.stops[static_cast<std::size_t>(c.from_stop)].id == "A");
    CHECK(s.stops[static_cast<std::size_t>(c.to_stop)].id == "B");
    CHECK(c.departure == 8 * 3600);
    CHECK(c.arrival == 8 * 3600 + 1200);
    CHECK(s.for_weekday(0).size() == 1);
    CHECK(s.for_weekday(6).empty());

    put("calendar.txt", "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n");
    CHECK(read_gtfs(feed.string()).connections.empty());

    fs::remove(feed / "trips.txt");
    CHECK_THROWS_AS(read_gtfs(feed.string()), InputError);

    CHECK(parse_gtfs_time("25:10:00") == 25 * 3600 + 600);
    CHECK(format_gtfs_time(25 * 3600 + 600) == "25:10:00");
    CHECK_FALSE(parse_gtfs_time("8h"));
}

TEST_CASE("gtfs writer round trip")
{
    TempDir dir;
    std::vector<Stop> stops{{"s1", {57.0, 11.0}}, {"s2", {57.01, 11.0}}, {"s3", {57.02, 11.0}}};
    std::vector<GtfsService> services{{"WK", 0x1F}};
    std::vector<GtfsTrip> trips{{"L1_1", "WK", {"s1", "s2", "s3"}, {0, 600, 1200}, {0, 630, 1200}}};
    write_gtfs(dir / "g", stops, services, trips);
    const auto s = read_gtfs(dir / "g");
    REQUIRE(s.connections.size() == 2);
    CHECK(s.connections[1].departure == 630);
    CHECK(s.connections[1].days == 0x1F);
}

TEST_CASE("write_table")
{
    TempDir dir;
    Table empty{{"group", "median", "error", "segregation"}, {}};
    write_table(empty, dir / "e.csv");
    CHECK(slurp(dir / "e.csv") == "group,median,error,segregation\n");

    Table s5{{"group", "median", "error", "segregation"}, {}};
    s5.add({std::string("F"), -0.385123456, 0.0012, std::string("Yes")});
    s5.add({std::string("M"), 0.0, 0.000123456789, std::string("No")});
    s5.add({std::string("N"), 1.0 / 3.0, std::int64_t{7}, std::string("Yes, strongly")});
    write_table(s5, dir / "a.csv");
    write_table(s5, dir / "b.csv");
    const auto text = slurp(dir / "a.csv");
    CHECK(text == slurp(dir / "b.csv"));
    CHECK(text == "group,median,error,segregation\n"
                  "F,-0.385123,0.0012,Yes\n"
                  "M,0,0.000123457,No\n"
                  "N,0.333333,7,\"Yes, strongly\"\n");
    const auto back = read_csv(dir / "a.csv");
    REQUIRE(back.rows.size() == 3);
    CHECK(*parse_double(back.rows[0][1]) == doctest::Approx(-0.385123456).epsilon(1e-6));
    CHECK(back.rows[2][3] == "Yes, strongly");
    CHECK_THROWS_AS(write_table(s5, (dir.path / "no" / "such" / "dir.csv").string()), InputError);
    CHECK_THROWS_AS(s5.add({std::string("x")}), InvariantError);
}

TEST_CASE("config subset")
{
    const auto cfg = Config::parse("# pipeline\nseed = 42\n[stays]\nr1 = 30.0\nt_max_hours = 3\nname = \"a # b\"\n"
                                   "[sim]\nkinds = ['no-pref', \"equalized\"]\nreps = [1, 2.5]\nenabled = true # c\n");
    CHECK(cfg.get_int("seed", 0) == 42);
    CHECK(cfg.get_double("stays.r1", 0) == 30.0);
    CHECK(cfg.get_double("stays.t_max_hours", 0) == 3.0);
    CHECK(cfg.get_string("stays.name", "") == "a # b");
    CHECK(cfg.get_strings("sim.kinds", {}) == std::vector<std::string>{"no-pref", "equalized"});
    CHECK(cfg.get_doubles("sim.reps", {}) == std::vector<double>{1, 2.5});
    CHECK(cfg.get_bool("sim.enabled", false));
    CHECK(cfg.get_int("missing", 7) == 7);
    CHECK_THROWS_AS(cfg.get_int("stays.name", 0), InputError);
    CHECK_THROWS_AS(Config::parse("a = 1\na = 2\n"), InputError);
    CHECK_THROWS_AS(Config::parse("a = \n"), InputError);
    CHECK_THROWS_AS(Config::parse("just words\n"), InputError);
    CHECK(Config::parse(cfg.canonical().empty() ? "" : "x = 1").get_int("x", 0) == 1);
}
