#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mobiseg/common.hpp"
#include "mobiseg/config.hpp"
#include "mobiseg/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mobiseg;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"([pipeline]
seed = 5

[world]
seed = 2
agents = 150
zones = 30
days = 21
pois = 300

[simulate]
no_pref_reps = 2
equalized_reps = 2
residential_reps = 5

[exposure]
reps = 5

[report]
bootstrap_reps = 50
)";

fs::path fresh_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

PipelineConfig make_config(const fs::path& out, const std::string& extra = "")
{
    Config cfg = Config::parse(std::string(kConfig) + extra);
    cfg.set("pipeline.out", out.string());
    return PipelineConfig::from_config(cfg);
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<Stage, bool> cached(const std::vector<StageReport>& reports)
{
    std::map<Stage, bool> out;
    for (const auto& r : reports)
        out[r.stage] = r.cached;
    return out;
}

const std::vector<std::string> kReports{"table1.csv", "table_s5.csv", "table_s6.csv", "table_s7.csv",
                                        "correlations.csv"};

} // namespace

TEST_CASE("stage names and graph")
{
    for (Stage s : all_stages()) {
        CHECK(parse_stage(to_string(s)) == s);
        for (Stage d : dependencies(s))
            CHECK(static_cast<int>(d) < static_cast<int>(s));
    }
    CHECK(!parse_stage("nope"));
    CHECK(is_stochastic(Stage::simulate));
    CHECK(!is_stochastic(Stage::detect_stays));
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("full run, cache reuse and seed changes")
{
    const auto out = fresh_dir("mobiseg_pipeline_test");
    {
        Pipeline p(make_config(out));
        const auto first = p.run(all_stages());
        REQUIRE(first.size() == all_stages().size());
        for (const auto& r : first)
            CHECK_MESSAGE(!r.cached, to_string(r.stage));
        for (const auto& f : kReports)
            CHECK(fs::exists(out / "stats-report" / f));
        for (Stage s : all_stages())
            CHECK(fs::exists(fs::path(p.stage_dir(s)) / "manifest.json"));
    }
    const std::string table1 = slurp(out / "stats-report" / "table1.csv");

    SUBCASE("unchanged rerun hits the cache everywhere")
    {
        Pipeline p(make_config(out));
        for (const auto& r : p.run(all_stages()))
            CHECK_MESSAGE(r.cached, to_string(r.stage));
    }
    SUBCASE("a new seed recomputes only stochastic stages")
    {
        auto cfg = make_config(out);
        cfg.seed = 6;
        Pipeline p(cfg);
        for (const auto& [s, hit] : cached(p.run(all_stages())))
            CHECK_MESSAGE(hit == !is_stochastic(s), to_string(s));
    }
    SUBCASE("a simulation setting invalidates the simulation and the report")
    {
        Pipeline p(make_config(out, "[simulate]\ninner_radius = 500\n"));
        const auto hits = cached(p.run(all_stages()));
        CHECK(!hits.at(Stage::simulate));
        CHECK(!hits.at(Stage::stats_report));
        CHECK(hits.at(Stage::exposure));
        CHECK(hits.at(Stage::classify));
    }
    SUBCASE("an edited artifact is a stale cache")
    {
        std::ofstream(out / "stats-report" / "table1.csv", std::ios::app) << "x\n";
        Pipeline p(make_config(out));
        CHECK_THROWS_WITH_AS(p.run(Stage::stats_report), doctest::Contains("stale cache"), InputError);
    }
    SUBCASE("a missing dependency names the stage")
    {
        fs::remove_all(out / "classify");
        Pipeline p(make_config(out));
        CHECK_THROWS_WITH_AS(p.run(Stage::simulate), doctest::Contains("classify"), InputError);
    }
    SUBCASE("stochastic stages need a seed")
    {
        auto cfg = make_config(out);
        cfg.seed.reset();
        Pipeline p(cfg);
        CHECK(p.run(Stage::detect_stays).cached);
        CHECK_THROWS_WITH_AS(p.run(Stage::exposure), doctest::Contains("seed"), InputError);
    }
    SUBCASE("reports do not depend on the worker count or the run")
    {
        const auto other = fresh_dir("mobiseg_pipeline_test_w3");
        auto cfg = make_config(other);
        cfg.workers = 3;
        Pipeline p(cfg);
        p.run(all_stages());
        for (const auto& f : kReports)
            CHECK_MESSAGE(slurp(other / "stats-report" / f) == slurp(out / "stats-report" / f), f);
        fs::remove_all(other);
    }
    CHECK(!table1.empty());
}

TEST_CASE("configuration errors")
{
    CHECK_THROWS_AS(PipelineConfig::from_config(Config::parse("[segregation]\nthresholds = \"maybe\"\n")), InputError);
    CHECK_THROWS_AS(PipelineConfig::from_config(Config::parse("[segregation]\nthresholds = [0.2, -0.2]\n")),
                    InputError);
    const auto fixed = PipelineConfig::from_config(Config::parse("[segregation]\nthresholds = [-0.3, 0.25]\n"));
    REQUIRE(fixed.thresholds);
    CHECK(fixed.thresholds->lo == -0.3);
    CHECK(PipelineConfig::from_config(Config::parse("[segregation]\nthresholds = \"derive\"\n")).thresholds ==
          std::nullopt);
    CHECK_THROWS_AS(PipelineConfig::from_config(Config::parse("[simulate]\nkinds = [\"residential-rand\"]\n")),
                    InputError);
    Pipeline p(PipelineConfig::from_config(Config::parse("[pipeline]\nout = \"/tmp/mobiseg_none\"\n")));
    CHECK_THROWS_WITH_AS(p.run(Stage::detect_stays), doctest::Contains("fixes"), InputError);
    CHECK_THROWS_AS(p.run(Stage::synth), InputError);
}
