#include "mobiseg/pipeline.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/csv.hpp"
#include "mobiseg/rng.hpp"
#include "mobiseg/stats.hpp"
#include "mobiseg/weights.hpp"
#include "mobiseg/zoning.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace mobiseg {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

struct StageSpec {
    Stage stage;
    const char* name;
    bool stochastic;
    std::vector<Stage> deps;
    std::vector<std::string> config_prefixes;
};

const std::vector<StageSpec>& specs()
{
    static const std::vector<StageSpec> s{
        {Stage::synth, "synth", false, {}, {"world.", "time."}},
        {Stage::detect_stays, "detect-stays", false, {}, {"stays.", "input.max_malformed"}},
        {Stage::homes, "homes", false, {Stage::detect_stays}, {"filter.", "time."}},
        {Stage::weights, "weights", false, {Stage::detect_stays, Stage::homes}, {"time.", "input.max_malformed"}},
        {Stage::zones, "zones", false, {}, {}},
        {Stage::segregate, "segregate", false, {Stage::weights, Stage::homes}, {"segregation.shares", "time."}},
        {Stage::classify, "classify", true, {Stage::segregate, Stage::homes, Stage::weights},
         {"segregation.", "simulate.residential_reps"}},
        {Stage::simulate, "simulate", true, {Stage::weights, Stage::homes, Stage::classify},
         {"simulate.", "segregation.shares", "time."}},
        {Stage::access, "access", false, {}, {"access."}},
        {Stage::exposure, "exposure", true, {Stage::weights, Stage::homes, Stage::classify},
         {"exposure.", "segregation.shares", "time."}},
        {Stage::stats_report, "stats-report", true,
         {Stage::segregate, Stage::classify, Stage::simulate, Stage::exposure, Stage::weights, Stage::access},
         {"report.", "segregation."}},
    };
    return s;
}

const StageSpec& spec(Stage s)
{
    for (const auto& x : specs())
        if (x.stage == s)
            return x;
    throw InvariantError("unknown stage");
}

std::string hex(std::uint64_t h)
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string resolve(const std::string& base, const std::string& p)
{
    if (p.empty())
        return p;
    const fs::path path(p);
    return fs::absolute(path.is_absolute() ? path : fs::path(base) / path).lexically_normal().string();
}

std::string opt_exact(const std::optional<double>& v) { return v ? format_exact(*v) : std::string(); }

std::optional<double> opt_parse(const std::string& s)
{
    if (s.empty())
        return std::nullopt;
    auto v = parse_double(s);
    if (!v)
        throw InputError("malformed number '" + s + "'");
    return v;
}

/// Rows of `data` reordered to follow `ids`; every id must be present.
std::vector<const std::vector<std::string>*> rows_for(const CsvData& data, const std::vector<std::string>& ids,
                                                      const std::string& what)
{
    const auto c_id = data.require("device_id");
    std::unordered_map<std::string, const std::vector<std::string>*> by_id;
    for (const auto& row : data.rows)
        by_id[row[c_id]] = &row;
    std::vector<const std::vector<std::string>*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw InputError(what + ": no row for device " + id);
        out.push_back(it->second);
    }
    return out;
}

std::string scenario_name(SimKind k)
{
    return k == SimKind::no_pref ? "No dest. preference" : "Equalized mobility & no dest. preference";
}

/// Yes when the sample lies significantly outside [lo, hi] at p < alpha.
std::string significance(std::span<const double> values, double lo, double hi, bool wilcoxon, double alpha = 0.001)
{
    if (values.size() < 2)
        return "NA";
    const double p_hi = wilcoxon ? wilcoxon_1samp(values, hi, Alternative::greater)
                                 : one_sample_test(values, hi, Alternative::greater).p;
    const double p_lo = wilcoxon ? wilcoxon_1samp(values, lo, Alternative::less)
                                 : one_sample_test(values, lo, Alternative::less).p;
    return (p_hi < alpha || p_lo < alpha) ? "Yes" : "No";
}

} // namespace

// ------------------------------------------------------------ stage table

const std::vector<Stage>& all_stages()
{
    static const std::vector<Stage> s = [] {
        std::vector<Stage> out;
        for (const auto& x : specs())
            out.push_back(x.stage);
        return out;
    }();
    return s;
}

std::string to_string(Stage s) { return spec(s).name; }

std::optional<Stage> parse_stage(std::string_view s)
{
    for (const auto& x : specs())
        if (s == x.name)
            return x.stage;
    return std::nullopt;
}

bool is_stochastic(Stage s) { return spec(s).stochastic; }
const std::vector<Stage>& dependencies(Stage s) { return spec(s).deps; }

// ----------------------------------------------------------------- hashing

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::string& path)
{
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().filename() != "manifest.json")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& f : files) {
            h = fnv1a(f.filename().string(), h);
            h = fnv1a(hex(fnv1a_file(f.string())), h);
        }
        return h;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot read " + path);
    std::vector<char> buf(1 << 20);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h = fnv1a(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
    }
    return h;
}

// ------------------------------------------------------------------ config

PipelineConfig PipelineConfig::from_config(const Config& config, const std::string& base_dir)
{
    PipelineConfig c;
    c.config = config;
    c.base_dir_ = base_dir;
    c.out_dir = resolve(base_dir, config.get_string("pipeline.out", c.out_dir));
    if (config.has("pipeline.seed"))
        c.seed = static_cast<std::uint64_t>(config.get_int("pipeline.seed", 0));
    c.workers = static_cast<unsigned>(std::max<std::int64_t>(1, config.get_int("pipeline.workers", 1)));

    for (const auto& k : config.keys())
        if (k.rfind("world.", 0) == 0)
            c.has_world = true;
    if (c.has_world)
        c.world = WorldConfig::from_config(config);
    for (const char* key : {"fixes", "zones", "grids", "pois", "gtfs", "holidays", "categories"})
        if (config.has(std::string("input.") + key))
            c.explicit_inputs_[key] = resolve(base_dir, config.get_string(std::string("input.") + key, ""));
    c.max_malformed = config.get_double("input.max_malformed", c.max_malformed);

    c.stays = StayParams::from_config(config);
    c.filter.min_home_nights = static_cast<int>(config.get_int("filter.min_home_nights", c.filter.min_home_nights));
    c.filter.min_active_days = static_cast<int>(config.get_int("filter.min_active_days", c.filter.min_active_days));
    c.filter.min_unique_locations =
        static_cast<int>(config.get_int("filter.min_unique_locations", c.filter.min_unique_locations));
    c.clock.offset_seconds =
        static_cast<int>(std::lround(config.get_double("time.utc_offset_hours", c.clock.offset_seconds / 3600.0) * 3600));
    const auto shares = config.get_doubles("segregation.shares", {c.shares.native, c.shares.foreign, c.shares.other});
    if (shares.size() != 3)
        throw InputError("segregation.shares needs three values");
    c.shares = {shares[0], shares[1], shares[2]};
    c.shares.validate();
    if (config.has("segregation.thresholds")) {
        std::optional<std::string> text;
        try {
            text = config.get_string("segregation.thresholds", "");
        } catch (const InputError&) {
        }
        if (text && *text != "derive")
            throw InputError("segregation.thresholds must be \"derive\" or [lo, hi]");
        if (!text) {
            const auto v = config.get_doubles("segregation.thresholds", {});
            if (v.size() != 2 || !(v[0] < v[1]))
                throw InputError("segregation.thresholds must be \"derive\" or [lo, hi] with lo < hi");
            c.thresholds = Thresholds{v[0], v[1]};
        }
    }
    c.residential_reps = static_cast<int>(config.get_int("simulate.residential_reps", c.residential_reps));
    if (c.residential_reps < 1)
        throw InputError("simulate.residential_reps must be at least 1");
    if (config.has("simulate.kinds")) {
        c.sim_kinds.clear();
        for (const auto& k : config.get_strings("simulate.kinds", {})) {
            const SimKind kind = parse_sim_kind(k);
            if (kind == SimKind::residential_rand)
                throw InputError("simulate.kinds: residential randomization runs in the classify stage");
            c.sim_kinds.push_back(kind);
        }
    }
    c.no_pref = SimConfig::from_config(config, SimKind::no_pref);
    c.equalized = SimConfig::from_config(config, SimKind::equalized);
    c.exposure_reps = static_cast<int>(config.get_int("exposure.reps", c.exposure_reps));
    if (c.exposure_reps < 1)
        throw InputError("exposure.reps must be at least 1");
    c.access = TransitParams::from_config(config);
    c.bootstrap_reps = static_cast<int>(config.get_int("report.bootstrap_reps", c.bootstrap_reps));
    if (c.bootstrap_reps < 1)
        throw InputError("report.bootstrap_reps must be at least 1");
    c.resolve_inputs();
    return c;
}

void PipelineConfig::resolve_inputs()
{
    const std::string world_dir = (fs::path(out_dir) / "world").string();
    auto pick = [&](const char* key, const std::string& world_name) {
        auto it = explicit_inputs_.find(key);
        if (it != explicit_inputs_.end())
            return it->second;
        return has_world && !world_name.empty() ? (fs::path(world_dir) / world_name).string() : std::string();
    };
    fixes = pick("fixes", "fixes.csv");
    zones = pick("zones", "zones.csv");
    grids = pick("grids", "grids.csv");
    pois = pick("pois", "pois.csv");
    gtfs = pick("gtfs", "gtfs");
    holidays = pick("holidays", "holidays.txt");
    categories = pick("categories", "");
}

std::uint64_t PipelineConfig::require_seed(Stage s) const
{
    if (!seed)
        throw InputError("stage " + to_string(s) + " is stochastic and needs a seed (--seed or pipeline.seed)");
    return derive_key(*seed, {static_cast<std::uint64_t>(s)});
}

// ------------------------------------------------------------------- cache

struct Pipeline::Cache {
    struct Hash {
        std::uintmax_t size = 0;
        fs::file_time_type time;
        std::uint64_t hash = 0;
    };
    std::map<std::string, Hash> hashes;
    std::string fixes_key;
    std::shared_ptr<FixSet> fixes;
    std::string zoning_key;
    std::shared_ptr<Zoning> zoning;
    std::map<std::string, std::shared_ptr<StaySet>> stays;

    std::uint64_t hash(const std::string& path)
    {
        if (fs::is_directory(path))
            return fnv1a_file(path);
        const auto size = fs::file_size(path);
        const auto time = fs::last_write_time(path);
        auto it = hashes.find(path);
        if (it != hashes.end() && it->second.size == size && it->second.time == time)
            return it->second.hash;
        const auto h = fnv1a_file(path);
        hashes[path] = {size, time, h};
        return h;
    }
    std::string key(const std::string& path) { return path + "#" + hex(hash(path)); }
};

// ---------------------------------------------------------------- pipeline

Pipeline::Pipeline(PipelineConfig config) : cfg_(std::move(config)), cache_(std::make_unique<Cache>())
{
    set_workers(cfg_.workers);
}

Pipeline::~Pipeline() = default;

std::string Pipeline::stage_dir(Stage s) const
{
    return (fs::path(cfg_.out_dir) / (s == Stage::synth ? std::string("world") : to_string(s))).string();
}

std::string Pipeline::artifact(Stage s, const std::string& name) const
{
    return (fs::path(stage_dir(s)) / name).string();
}

std::vector<std::string> Pipeline::outputs(Stage s) const
{
    switch (s) {
    case Stage::synth:
        return {"zones.csv", "grids.csv", "pois.csv", "gtfs", "holidays.txt", "fixes.csv", "truth_agents.csv",
                "truth_visits.csv"};
    case Stage::detect_stays:
        return {"stays.csv"};
    case Stage::homes:
        return {"profiles.csv", "stay_stats.csv"};
    case Stage::weights:
        return {"stays.csv", "population.csv"};
    case Stage::zones:
        return {"analysis_zones.csv"};
    case Stage::segregate:
        return {"individuals.csv", "sequences.csv"};
    case Stage::classify:
        return {"groups.csv", "thresholds.csv"};
    case Stage::simulate: {
        std::vector<std::string> out;
        for (auto k : cfg_.sim_kinds)
            out.push_back(to_string(k) + ".csv");
        out.push_back("summary.csv");
        return out;
    }
    case Stage::access:
        return {"access.csv"};
    case Stage::exposure:
        return {"individuals.csv", "null.csv"};
    case Stage::stats_report:
        return {"table1.csv", "table_s5.csv", "table_s6.csv", "table_s7.csv", "correlations.csv"};
    }
    return {};
}

std::vector<std::string> Pipeline::inputs(Stage s) const
{
    auto need = [&](const std::string& p, const char* what) {
        if (p.empty())
            throw InputError("stage " + to_string(s) + ": no " + what + " input configured (set input." + what +
                             " or a [world] table)");
        return p;
    };
    std::vector<std::string> in;
    auto census = [&] {
        in.push_back(need(cfg_.zones, "zones"));
        in.push_back(need(cfg_.grids, "grids"));
    };
    auto holidays = [&] {
        if (!cfg_.holidays.empty())
            in.push_back(cfg_.holidays);
    };
    switch (s) {
    case Stage::synth:
        break;
    case Stage::detect_stays:
        in.push_back(need(cfg_.fixes, "fixes"));
        break;
    case Stage::homes:
        in.push_back(artifact(Stage::detect_stays, "stays.csv"));
        census();
        holidays();
        break;
    case Stage::weights:
        in.push_back(artifact(Stage::detect_stays, "stays.csv"));
        in.push_back(need(cfg_.fixes, "fixes"));
        in.push_back(artifact(Stage::homes, "profiles.csv"));
        census();
        break;
    case Stage::zones:
        census();
        break;
    case Stage::segregate:
        in.push_back(artifact(Stage::weights, "stays.csv"));
        in.push_back(artifact(Stage::weights, "population.csv"));
        in.push_back(artifact(Stage::homes, "profiles.csv"));
        census();
        holidays();
        break;
    case Stage::classify:
        in.push_back(artifact(Stage::segregate, "individuals.csv"));
        in.push_back(artifact(Stage::segregate, "sequences.csv"));
        in.push_back(artifact(Stage::weights, "stays.csv"));
        in.push_back(artifact(Stage::homes, "profiles.csv"));
        census();
        break;
    case Stage::simulate:
        in.push_back(artifact(Stage::weights, "stays.csv"));
        in.push_back(artifact(Stage::weights, "population.csv"));
        in.push_back(artifact(Stage::homes, "profiles.csv"));
        in.push_back(artifact(Stage::classify, "groups.csv"));
        census();
        in.push_back(need(cfg_.pois, "pois"));
        if (!cfg_.categories.empty())
            in.push_back(cfg_.categories);
        holidays();
        break;
    case Stage::access:
        in.push_back(need(cfg_.grids, "grids"));
        in.push_back(need(cfg_.gtfs, "gtfs"));
        break;
    case Stage::exposure:
        in.push_back(artifact(Stage::weights, "stays.csv"));
        in.push_back(artifact(Stage::weights, "population.csv"));
        in.push_back(artifact(Stage::homes, "profiles.csv"));
        in.push_back(artifact(Stage::classify, "groups.csv"));
        census();
        holidays();
        break;
    case Stage::stats_report:
        in.push_back(artifact(Stage::segregate, "individuals.csv"));
        in.push_back(artifact(Stage::classify, "groups.csv"));
        in.push_back(artifact(Stage::classify, "thresholds.csv"));
        for (auto k : cfg_.sim_kinds)
            in.push_back(artifact(Stage::simulate, to_string(k) + ".csv"));
        in.push_back(artifact(Stage::exposure, "individuals.csv"));
        in.push_back(artifact(Stage::exposure, "null.csv"));
        in.push_back(artifact(Stage::weights, "population.csv"));
        in.push_back(artifact(Stage::access, "access.csv"));
        break;
    }
    return in;
}

std::string Pipeline::config_digest(Stage s) const
{
    std::istringstream lines(cfg_.config.canonical());
    std::string relevant;
    for (std::string line; std::getline(lines, line);)
        for (const auto& prefix : spec(s).config_prefixes)
            if (line.rfind(prefix, 0) == 0) {
                relevant += line + "\n";
                break;
            }
    if (s == Stage::simulate)
        for (auto k : cfg_.sim_kinds)
            relevant += "kind=" + to_string(k) + "\n";
    return hex(fnv1a(relevant));
}

std::vector<StageReport> Pipeline::run(std::span<const Stage> stages)
{
    std::vector<StageReport> out;
    for (Stage s : all_stages())
        if (std::find(stages.begin(), stages.end(), s) != stages.end())
            out.push_back(run(s));
    return out;
}

StageReport Pipeline::run(Stage s)
{
    StageReport report;
    report.stage = s;
    const auto t0 = std::chrono::steady_clock::now();
    const auto in = inputs(s);
    for (const auto& p : in)
        if (!fs::exists(p)) {
            std::string producer;
            for (Stage d : all_stages())
                if (p.rfind(stage_dir(d), 0) == 0)
                    producer = " (produced by stage " + to_string(d) + ")";
            throw InputError("stage " + to_string(s) + ": missing input " + p + producer);
        }
    nlohmann::ordered_json expected;
    expected["stage"] = to_string(s);
    expected["version"] = kVersion;
    if (is_stochastic(s))
        expected["seed"] = cfg_.require_seed(s);
    else
        expected["seed"] = nullptr;
    expected["config"] = config_digest(s);
    nlohmann::ordered_json hashes = nlohmann::ordered_json::object();
    for (const auto& p : in)
        hashes[p] = hex(cache_->hash(p));
    expected["inputs"] = hashes;

    const fs::path manifest = fs::path(stage_dir(s)) / "manifest.json";
    if (fs::exists(manifest)) {
        nlohmann::ordered_json previous;
        try {
            std::ifstream f(manifest);
            previous = nlohmann::ordered_json::parse(f);
        } catch (const std::exception&) {
            previous = nullptr;
        }
        bool same = previous.is_object();
        for (const char* k : {"stage", "version", "seed", "config", "inputs"})
            same = same && previous.contains(k) && previous[k] == expected[k];
        if (same && previous.contains("outputs")) {
            for (const auto& [name, h] : previous["outputs"].items()) {
                const std::string p = artifact(s, name);
                if (!fs::exists(p) || hex(cache_->hash(p)) != h.get<std::string>())
                    throw InputError("stage " + to_string(s) + ": stale cache, artifact " + p +
                                     " does not match its manifest; delete " + stage_dir(s) + " to recompute");
            }
            report.cached = true;
            report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return report;
        }
    }

    fs::create_directories(stage_dir(s));
    fs::remove(manifest);
    execute(s, report);
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& name : outputs(s))
        out[name] = hex(cache_->hash(artifact(s, name)));
    expected["outputs"] = out;
    {
        std::ofstream f(manifest);
        f << expected.dump(2) << "\n";
        if (!f)
            throw InputError("cannot write " + manifest.string());
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// ----------------------------------------------------------------- stages

namespace {

struct Loaded {
    std::shared_ptr<StaySet> stays;
    std::shared_ptr<Zoning> zoning;
    std::vector<IndividualProfile> profiles;
    std::vector<std::string> ids; ///< device id per profile
    std::vector<double> weights;  ///< W_p per profile
};

} // namespace

void Pipeline::execute(Stage s, StageReport& report)
{
    auto& cache = *cache_;
    auto note = [&](std::string n) { report.notes.push_back(std::move(n)); };
    auto calendar = [&] {
        return cfg_.holidays.empty() ? HolidayCalendar::sweden_2019() : HolidayCalendar::load(cfg_.holidays);
    };
    auto categories = [&] {
        return cfg_.categories.empty() ? CategoryTable::standard() : CategoryTable::load(cfg_.categories);
    };
    auto fixes = [&]() -> const FixSet& {
        const auto key = cache.key(cfg_.fixes);
        if (cache.fixes_key != key) {
            ReadReport rr;
            cache.fixes = std::make_shared<FixSet>(read_fixes(cfg_.fixes, cfg_.max_malformed, &rr));
            cache.fixes_key = key;
            note("fixes: " + std::to_string(rr.rows) + " rows, " + std::to_string(rr.malformed) + " malformed");
        }
        return *cache.fixes;
    };
    auto zoning = [&]() -> std::shared_ptr<Zoning> {
        const auto key = cache.key(cfg_.zones) + "|" + cache.key(cfg_.grids);
        if (cache.zoning_key != key) {
            cache.zoning = std::make_shared<Zoning>(read_zones(cfg_.zones), read_grids(cfg_.grids));
            cache.zoning_key = key;
        }
        return cache.zoning;
    };
    auto stays = [&](const std::string& path) -> std::shared_ptr<StaySet> {
        const auto key = cache.key(path);
        auto it = cache.stays.find(key);
        if (it != cache.stays.end())
            return it->second;
        auto set = std::make_shared<StaySet>(read_stays(path));
        cache.stays[key] = set;
        return set;
    };
    auto load = [&](bool with_weights) {
        Loaded l;
        l.stays = stays(artifact(Stage::weights, "stays.csv"));
        l.zoning = zoning();
        l.profiles = read_profiles(artifact(Stage::homes, "profiles.csv"), *l.stays, *l.zoning);
        for (const auto& p : l.profiles)
            l.ids.push_back(l.stays->device_ids[static_cast<std::size_t>(p.device)]);
        if (with_weights)
            l.weights = read_population_weights(artifact(Stage::weights, "population.csv"), l.profiles, *l.stays);
        return l;
    };
    auto apply_groups = [&](Loaded& l) {
        const auto data = read_csv(artifact(Stage::classify, "groups.csv"));
        const auto rows = rows_for(data, l.ids, "groups.csv");
        const auto c_group = data.require("group");
        for (std::size_t k = 0; k < l.profiles.size(); ++k) {
            auto g = parse_group((*rows[k])[c_group]);
            if (!g)
                throw InputError("groups.csv: bad group for device " + l.ids[k]);
            l.profiles[k].group = *g;
        }
    };

    switch (s) {
    case Stage::synth: {
        if (!cfg_.has_world)
            throw InputError("stage synth needs a [world] table in the configuration");
        const World world = gen_world(cfg_.world);
        const Trajectories traj = gen_trajectories(world, cfg_.world);
        write_world(world, traj, stage_dir(s));
        note(std::to_string(world.agents.size()) + " agents, " + std::to_string(traj.fixes.fixes.size()) + " fixes");
        break;
    }
    case Stage::detect_stays: {
        const StaySet set = detect_stays(fixes(), cfg_.stays);
        write_stays(set, artifact(s, "stays.csv"));
        note(std::to_string(set.stays.size()) + " stays from " + std::to_string(set.device_ids.size()) + " devices");
        break;
    }
    case Stage::homes: {
        const auto set = stays(artifact(Stage::detect_stays, "stays.csv"));
        const auto z = zoning();
        const auto profiles = filter_individuals(*set, *z, calendar(), cfg_.clock, cfg_.filter);
        write_profiles(profiles, *set, *z, artifact(s, "profiles.csv"));
        Table t{{"attribute", "min", "p25", "p50", "p75", "max"}, {}};
        std::vector<double> locations;
        std::vector<double> active;
        std::vector<double> count;
        std::vector<double> duration;
        for (const auto& p : profiles) {
            const auto span = set->device(static_cast<std::size_t>(p.device));
            locations.push_back(p.unique_locations);
            active.push_back(p.active_days);
            count.push_back(static_cast<double>(span.size()));
            std::vector<double> d;
            for (const auto& st : span)
                d.push_back(st.duration_minutes());
            duration.push_back(d.empty() ? 0.0 : median(d));
        }
        auto add = [&](const std::string& name, const std::vector<double>& v) {
            if (v.empty()) {
                t.add({name, std::string(), std::string(), std::string(), std::string(), std::string()});
                return;
            }
            t.add({name, percentile(v, 0), percentile(v, 25), percentile(v, 50), percentile(v, 75), percentile(v, 100)});
        };
        add("unique_locations", locations);
        add("active_days", active);
        add("stays", count);
        add("median_stay_minutes", duration);
        write_table(t, artifact(s, "stay_stats.csv"));
        note(std::to_string(profiles.size()) + " of " + std::to_string(set->device_ids.size()) + " devices retained");
        break;
    }
    case Stage::weights: {
        StaySet set = *stays(artifact(Stage::detect_stays, "stays.csv"));
        const auto gaps = assign_stay_weights(set, fixes(), cfg_.clock);
        write_stays(set, artifact(s, "stays.csv"));
        const auto z = zoning();
        const auto profiles = read_profiles(artifact(Stage::homes, "profiles.csv"), set, *z);
        const auto pw = population_weights(profiles, z->census());
        write_population_weights(profiles, pw, set, z->census(), artifact(s, "population.csv"));
        note("cut-point " + format_real(pw.cutpoint) + "; " + std::to_string(gaps) + " devices with unobserved slots");
        break;
    }
    case Stage::zones: {
        const auto z = zoning();
        z->write_csv(artifact(s, "analysis_zones.csv"));
        note(std::to_string(z->zones().size()) + " analysis zones from " + std::to_string(z->census().size()) +
             " census zones");
        break;
    }
    case Stage::segregate: {
        auto l = load(true);
        const auto stay_zone = locate_stays(*l.stays, *l.zoning);
        const auto vin = make_visitors(l.profiles, l.weights, *l.stays, stay_zone, *l.zoning, calendar(), cfg_.clock);
        const auto result = evaluate(vin.visitors, l.zoning->zones().size(), cfg_.shares, false);
        CsvWriter w(artifact(s, "individuals.csv"));
        w.header({"device_id", "home_zone", "home_cell", "weight", "ice_r", "ice_e", "intervals", "rg_km"});
        CsvWriter q(artifact(s, "sequences.csv"));
        std::vector<std::string> cols{"device_id"};
        for (int i = 1; i <= kIntervalsPerDay; ++i)
            cols.push_back("i" + std::to_string(i));
        q.header(cols);
        std::size_t defined = 0;
        for (std::size_t k = 0; k < l.profiles.size(); ++k) {
            const auto& p = l.profiles[k];
            const auto& zone = l.zoning->census()[static_cast<std::size_t>(p.home_census_zone)];
            const auto ice_r = ice_adjusted(zone.composition, cfg_.shares);
            const auto& e = result.experienced[k];
            const auto rg = radius_of_gyration_km(l.stays->device(static_cast<std::size_t>(p.device)));
            w.text(l.ids[k]).text(zone.id).text(l.zoning->cells()[static_cast<std::size_t>(p.home_cell)].id);
            w.exact(l.weights[k]).text(opt_exact(ice_r)).text(opt_exact(e.ice_e));
            w.integer(static_cast<std::int64_t>(e.defined().size())).text(opt_exact(rg));
            w.end_row();
            q.text(l.ids[k]);
            for (double v : e.sequence)
                std::isnan(v) ? q.empty() : q.exact(v);
            q.end_row();
            defined += e.ice_e ? 1 : 0;
        }
        w.close();
        q.close();
        note(std::to_string(defined) + " of " + std::to_string(l.profiles.size()) + " individuals with ICE_e; " +
             std::to_string(vin.unlocated_stays) + " unlocated stays");
        break;
    }
    case Stage::classify: {
        auto l = load(false);
        Thresholds t;
        ResidentialNull null;
        const bool derive = !cfg_.thresholds;
        if (derive) {
            null = sim_residential_randomization(l.profiles, l.zoning->census(), cfg_.residential_reps,
                                                 cfg_.require_seed(s), cfg_.shares);
            t = null.thresholds;
        } else {
            t = *cfg_.thresholds;
        }
        const auto ind = read_csv(artifact(Stage::segregate, "individuals.csv"));
        const auto seq = read_csv(artifact(Stage::segregate, "sequences.csv"));
        const auto ind_rows = rows_for(ind, l.ids, "individuals.csv");
        const auto seq_rows = rows_for(seq, l.ids, "sequences.csv");
        const auto c_r = ind.require("ice_r");
        const auto c_e = ind.require("ice_e");
        CsvWriter w(artifact(s, "groups.csv"));
        w.header({"device_id", "ice_r", "group", "ice_e", "experienced", "insufficient"});
        std::array<int, 3> counts{};
        for (std::size_t k = 0; k < l.profiles.size(); ++k) {
            const auto ice_r = opt_parse((*ind_rows[k])[c_r]);
            const Group g = ice_r ? classify_residential(*ice_r, t) : Group::M;
            ++counts[static_cast<std::size_t>(g)];
            std::vector<double> sequence;
            for (int i = 1; i <= kIntervalsPerDay; ++i)
                if (auto v = opt_parse((*seq_rows[k])[static_cast<std::size_t>(i)]))
                    sequence.push_back(*v);
            const auto ec = classify_experienced(sequence, t);
            w.text(l.ids[k]).text(opt_exact(ice_r)).text(to_string(g)).text((*ind_rows[k])[c_e]);
            w.text(to_string(ec.group)).integer(ec.insufficient ? 1 : 0);
            w.end_row();
        }
        w.close();
        CsvWriter th(artifact(s, "thresholds.csv"));
        th.header({"lo", "hi", "derived", "null_mean", "analytic_mean", "samples"});
        th.exact(t.lo).exact(t.hi).integer(derive ? 1 : 0);
        if (derive)
            th.exact(null.mean).exact(null.analytic_mean).integer(static_cast<std::int64_t>(null.samples));
        else
            th.empty().empty().empty();
        th.end_row();
        th.close();
        note("thresholds [" + format_real(t.lo) + ", " + format_real(t.hi) + "]; F " + std::to_string(counts[0]) +
             ", N " + std::to_string(counts[1]) + ", M " + std::to_string(counts[2]));
        break;
    }
    case Stage::simulate: {
        auto l = load(true);
        apply_groups(l);
        const auto cats = categories();
        const PoiIndex index(read_pois(cfg_.pois, cats), cats.size(), l.zoning.get());
        const auto stay_zone = locate_stays(*l.stays, *l.zoning);
        SimConfig base = cfg_.no_pref;
        const auto stay_poi = assign_stays_to_pois(*l.stays, index, base.assign_radius_m);
        SimInputs in;
        in.profiles = &l.profiles;
        in.weights = l.weights;
        in.stays = l.stays.get();
        in.stay_zone = stay_zone;
        in.stay_poi = stay_poi;
        in.zoning = l.zoning.get();
        in.pois = &index;
        in.categories = &cats;
        in.calendar = calendar();
        in.clock = cfg_.clock;
        in.shares = cfg_.shares;
        CsvWriter sum(artifact(s, "summary.csv"));
        sum.header({"kind", "repetitions", "relocated", "unmoved", "widened"});
        for (SimKind kind : cfg_.sim_kinds) {
            SimConfig sc = kind == SimKind::no_pref ? cfg_.no_pref : cfg_.equalized;
            sc.seed = derive_key(cfg_.require_seed(s), {static_cast<std::uint64_t>(kind)});
            SimResult r;
            if (kind == SimKind::no_pref) {
                r = sim_no_preference(in, sc);
            } else {
                const auto dist = build_distance_distribution(in);
                r = sim_equalized(in, sc, dist);
            }
            CsvWriter w(artifact(s, to_string(kind) + ".csv"));
            w.header({"device_id", "ice_e", "to_n", "to_f", "to_m"});
            for (std::size_t k = 0; k < l.profiles.size(); ++k) {
                w.text(l.ids[k]).text(opt_exact(r.ice_e[k]));
                if (const auto& e = r.exposure[k])
                    w.exact(e->to_n).exact(e->to_f).exact(e->to_m);
                else
                    w.empty().empty().empty();
                w.end_row();
            }
            w.close();
            sum.text(to_string(kind)).integer(r.repetitions).integer(static_cast<std::int64_t>(r.relocated));
            sum.integer(static_cast<std::int64_t>(r.unmoved)).integer(static_cast<std::int64_t>(r.widened));
            sum.end_row();
            note(to_string(kind) + ": " + std::to_string(r.repetitions) + " repetitions, " +
                 std::to_string(r.widened) + " widened picks");
        }
        sum.close();
        break;
    }
    case Stage::access: {
        const auto cells = read_grids(cfg_.grids);
        const TransitNetwork net(read_gtfs(cfg_.gtfs), cells, cfg_.access);
        std::vector<int> which(cells.size());
        std::vector<double> values(cells.size());
        parallel_for(cells.size(), [&](std::size_t k) {
            which[k] = static_cast<int>(k);
            values[k] = net.accessibility(static_cast<int>(k), cfg_.access.budget_minutes);
        });
        write_access(cells, which, values, artifact(s, "access.csv"));
        note(std::to_string(cells.size()) + " origin cells");
        break;
    }
    case Stage::exposure: {
        auto l = load(true);
        apply_groups(l);
        const auto stay_zone = locate_stays(*l.stays, *l.zoning);
        const auto vin = make_visitors(l.profiles, l.weights, *l.stays, stay_zone, *l.zoning, calendar(), cfg_.clock);
        const std::size_t zones = l.zoning->zones().size();
        const auto result = evaluate(vin.visitors, zones, cfg_.shares, true);
        const auto null = exposure_null(vin.visitors, zones, cfg_.exposure_reps, cfg_.require_seed(s));
        CsvWriter w(artifact(s, "individuals.csv"));
        w.header({"device_id", "group", "to_n", "to_f", "to_m"});
        for (std::size_t k = 0; k < l.profiles.size(); ++k) {
            w.text(l.ids[k]).text(to_string(l.profiles[k].group));
            if (const auto& e = result.exposure[k])
                w.exact(e->to_n).exact(e->to_f).exact(e->to_m);
            else
                w.empty().empty().empty();
            w.end_row();
        }
        w.close();
        CsvWriter n(artifact(s, "null.csv"));
        n.header({"target", "baseline", "lo", "hi"});
        for (Group g : {Group::F, Group::N, Group::M}) {
            n.text(to_string(g)).exact(null.baseline.of(g)).exact(null.lo.of(g)).exact(null.hi.of(g));
            n.end_row();
        }
        n.close();
        break;
    }
    case Stage::stats_report: {
        const std::uint64_t seed = cfg_.require_seed(s);
        const auto groups = read_csv(artifact(Stage::classify, "groups.csv"));
        std::vector<std::string> ids;
        const auto c_id = groups.require("device_id");
        for (const auto& row : groups.rows)
            ids.push_back(row[c_id]);
        const std::size_t n = ids.size();
        const auto c_group = groups.require("group");
        const auto c_r = groups.require("ice_r");
        const auto c_e = groups.require("ice_e");
        std::vector<Group> group(n);
        std::vector<std::optional<double>> ice_r(n);
        std::vector<std::optional<double>> ice_e(n);
        for (std::size_t k = 0; k < n; ++k) {
            group[k] = parse_group(groups.rows[k][c_group]).value_or(Group::M);
            ice_r[k] = opt_parse(groups.rows[k][c_r]);
            ice_e[k] = opt_parse(groups.rows[k][c_e]);
        }
        const auto pop = read_csv(artifact(Stage::weights, "population.csv"));
        const auto pop_rows = rows_for(pop, ids, "population.csv");
        std::vector<double> weight(n);
        for (std::size_t k = 0; k < n; ++k)
            weight[k] = opt_parse((*pop_rows[k])[pop.require("weight")]).value_or(0.0);
        const auto ind = read_csv(artifact(Stage::segregate, "individuals.csv"));
        const auto ind_rows = rows_for(ind, ids, "individuals.csv");
        const auto thr = read_csv(artifact(Stage::classify, "thresholds.csv"));
        if (thr.rows.empty())
            throw InputError("thresholds.csv has no rows");
        const Thresholds t{*opt_parse(thr.rows[0][thr.require("lo")]), *opt_parse(thr.rows[0][thr.require("hi")])};

        struct Scenario {
            std::string name;
            std::vector<std::optional<double>> ice_e;
            std::vector<std::optional<ExposureShares>> exposure;
        };
        auto exposure_of = [&](const CsvData& d, const std::vector<const std::vector<std::string>*>& rows,
                               std::size_t k) -> std::optional<ExposureShares> {
            const auto to_n = opt_parse((*rows[k])[d.require("to_n")]);
            const auto to_f = opt_parse((*rows[k])[d.require("to_f")]);
            const auto to_m = opt_parse((*rows[k])[d.require("to_m")]);
            if (!to_n || !to_f || !to_m)
                return std::nullopt;
            return ExposureShares{*to_n, *to_f, *to_m};
        };
        std::vector<Scenario> scenarios;
        {
            Scenario emp{"Empirical", ice_e, {}};
            const auto ex = read_csv(artifact(Stage::exposure, "individuals.csv"));
            const auto rows = rows_for(ex, ids, "exposure individuals.csv");
            for (std::size_t k = 0; k < n; ++k)
                emp.exposure.push_back(exposure_of(ex, rows, k));
            scenarios.push_back(std::move(emp));
        }
        for (SimKind kind : cfg_.sim_kinds) {
            Scenario sc{scenario_name(kind), {}, {}};
            const auto d = read_csv(artifact(Stage::simulate, to_string(kind) + ".csv"));
            const auto rows = rows_for(d, ids, to_string(kind) + ".csv");
            for (std::size_t k = 0; k < n; ++k) {
                sc.ice_e.push_back(opt_parse((*rows[k])[d.require("ice_e")]));
                sc.exposure.push_back(exposure_of(d, rows, k));
            }
            scenarios.push_back(std::move(sc));
        }
        std::uint64_t boot = 0;
        auto summary = [&](const std::vector<double>& v, const std::vector<double>& w) {
            WeightedSample ws{v, w};
            return weighted_bootstrap_median(ws, cfg_.bootstrap_reps, derive_key(seed, {++boot}));
        };

        // Residential segregation by group.
        Table s5{{"group", "n", "median", "error", "segregation"}, {}};
        for (Group g : {Group::F, Group::N, Group::M}) {
            std::vector<double> v;
            std::vector<double> w;
            for (std::size_t k = 0; k < n; ++k)
                if (group[k] == g && ice_r[k] && weight[k] > 0.0) {
                    v.push_back(*ice_r[k]);
                    w.push_back(weight[k]);
                }
            if (v.empty()) {
                s5.add({to_string(g), std::int64_t{0}, std::string(), std::string(), std::string("NA")});
                continue;
            }
            const auto b = summary(v, w);
            s5.add({to_string(g), static_cast<std::int64_t>(v.size()), b.median, b.error,
                    significance(v, t.lo, t.hi, false)});
        }
        write_table(s5, artifact(s, "table_s5.csv"));

        // Experienced segregation by group and scenario.
        Table s6{{"group", "scenario", "n", "median", "error", "segregation"}, {}};
        for (Group g : {Group::F, Group::N, Group::M})
            for (const auto& sc : scenarios) {
                std::vector<double> v;
                std::vector<double> w;
                for (std::size_t k = 0; k < n; ++k)
                    if (group[k] == g && sc.ice_e[k] && weight[k] > 0.0) {
                        v.push_back(*sc.ice_e[k]);
                        w.push_back(weight[k]);
                    }
                if (v.empty()) {
                    s6.add({to_string(g), sc.name, std::int64_t{0}, std::string(), std::string(), std::string("NA")});
                    continue;
                }
                const auto b = summary(v, w);
                s6.add({to_string(g), sc.name, static_cast<std::int64_t>(v.size()), b.median, b.error,
                        significance(v, t.lo, t.hi, false)});
            }
        write_table(s6, artifact(s, "table_s6.csv"));

        // Exposure deviations from random mixing, in percentage points.
        const auto null = read_csv(artifact(Stage::exposure, "null.csv"));
        std::map<std::string, std::array<double, 3>> bounds;
        for (const auto& row : null.rows)
            bounds[row[null.require("target")]] = {*opt_parse(row[null.require("baseline")]),
                                                   *opt_parse(row[null.require("lo")]),
                                                   *opt_parse(row[null.require("hi")])};
        Table s7{{"exposure", "scenario", "n", "median", "error", "deviation"}, {}};
        for (Group from : {Group::F, Group::N, Group::M})
            for (Group to : {Group::F, Group::N, Group::M}) {
                const auto b = bounds.at(to_string(to));
                for (const auto& sc : scenarios) {
                    std::vector<double> v;
                    std::vector<double> w;
                    for (std::size_t k = 0; k < n; ++k)
                        if (group[k] == from && sc.exposure[k] && weight[k] > 0.0) {
                            v.push_back(100.0 * (sc.exposure[k]->of(to) - b[0]));
                            w.push_back(weight[k]);
                        }
                    const std::string label = to_string(from) + "->" + to_string(to);
                    if (v.empty()) {
                        s7.add({label, sc.name, std::int64_t{0}, std::string(), std::string(), std::string("NA")});
                        continue;
                    }
                    const auto m = summary(v, w);
                    s7.add({label, sc.name, static_cast<std::int64_t>(v.size()), m.median, m.error,
                            significance(v, 100.0 * b[1], 100.0 * b[2], true)});
                }
            }
        write_table(s7, artifact(s, "table_s7.csv"));

        // Counterfactual effects on |ICE_e|.
        Table t1{{"effect", "group", "n", "diff", "u", "rank_biserial", "p", "cohens_d", "effect_size", "reduced_share"},
                 {}};
        for (std::size_t j = 1; j < scenarios.size(); ++j) {
            const std::string effect =
                scenarios[j].name == scenario_name(SimKind::no_pref) ? "Destination preference"
                                                                     : "Destination preference & mobility range";
            for (Group g : {Group::N, Group::F}) {
                WeightedSample emp;
                WeightedSample sim;
                std::size_t reduced = 0;
                for (std::size_t k = 0; k < n; ++k)
                    if (group[k] == g && scenarios[0].ice_e[k] && scenarios[j].ice_e[k] && weight[k] > 0.0) {
                        emp.push(std::abs(*scenarios[0].ice_e[k]), weight[k]);
                        sim.push(std::abs(*scenarios[j].ice_e[k]), weight[k]);
                        reduced += std::abs(*scenarios[j].ice_e[k]) < std::abs(*scenarios[0].ice_e[k]) ? 1 : 0;
                    }
                if (emp.empty()) {
                    t1.add({effect, to_string(g), std::int64_t{0}, std::string(), std::string(), std::string(),
                            std::string(), std::string(), std::string("NA"), std::string()});
                    continue;
                }
                const auto mw = weighted_mann_whitney_u(sim, emp);
                const auto d = cohens_d(emp, sim);
                t1.add({effect, to_string(g), static_cast<std::int64_t>(emp.size()), mw.median_diff, mw.u,
                        mw.rank_biserial, mw.p, d ? Cell{d->d} : Cell{std::string()},
                        d ? to_string(d->label) : std::string("NA"),
                        static_cast<double>(reduced) / static_cast<double>(emp.size())});
            }
        }
        write_table(t1, artifact(s, "table1.csv"));

        // Correlations.
        const auto acc = read_csv(artifact(Stage::access, "access.csv"));
        std::unordered_map<std::string, double> access;
        for (const auto& row : acc.rows)
            if (auto v = opt_parse(row[acc.require("A_t")]))
                access[row[acc.require("cell_id")]] = *v;
        const auto c_rg = ind.require("rg_km");
        const auto c_cell = ind.require("home_cell");
        Table corr{{"x", "y", "group", "n", "pearson_r", "pearson_p", "spearman_rho", "spearman_p"}, {}};
        auto add_corr = [&](const std::string& xname, const std::string& yname, std::optional<Group> only,
                            auto&& xval, auto&& yval) {
            std::vector<double> x;
            std::vector<double> y;
            std::vector<double> w;
            for (std::size_t k = 0; k < n; ++k) {
                if ((only && group[k] != *only) || weight[k] <= 0.0)
                    continue;
                const std::optional<double> a = xval(k);
                const std::optional<double> b = yval(k);
                if (a && b) {
                    x.push_back(*a);
                    y.push_back(*b);
                    w.push_back(weight[k]);
                }
            }
            const std::string gname = only ? to_string(*only) : std::string("all");
            const auto c = x.size() >= 3 ? correlations(x, y, w) : std::nullopt;
            if (!c) {
                corr.add({xname, yname, gname, static_cast<std::int64_t>(x.size()), std::string(), std::string(),
                          std::string(), std::string()});
                return;
            }
            corr.add({xname, yname, gname, static_cast<std::int64_t>(x.size()), c->pearson_r, c->pearson_p,
                      c->spearman_rho, c->spearman_p});
        };
        auto r_of = [&](std::size_t k) { return ice_r[k]; };
        auto e_of = [&](std::size_t k) { return ice_e[k]; };
        auto abs_e = [&](std::size_t k) -> std::optional<double> {
            return ice_e[k] ? std::optional<double>(std::abs(*ice_e[k])) : std::nullopt;
        };
        auto rg_of = [&](std::size_t k) { return opt_parse((*ind_rows[k])[c_rg]); };
        auto a_of = [&](std::size_t k) -> std::optional<double> {
            auto it = access.find((*ind_rows[k])[c_cell]);
            return it == access.end() ? std::nullopt : std::optional<double>(it->second);
        };
        add_corr("ice_r", "ice_e", std::nullopt, r_of, e_of);
        for (Group g : {Group::F, Group::N, Group::M})
            add_corr("rg_km", "abs_ice_e", g, rg_of, abs_e);
        for (Group g : {Group::F, Group::N, Group::M})
            add_corr("access", "ice_e", g, a_of, e_of);
        write_table(corr, artifact(s, "correlations.csv"));
        break;
    }
    }
}

} // namespace mobiseg
