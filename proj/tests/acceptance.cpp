// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any fails.
// Work directories go under $MOBISEG_ACCEPT_DIR (default: the system temp dir).

#include "mobiseg/common.hpp"
#include "mobiseg/config.hpp"
#include "mobiseg/csv.hpp"
#include "mobiseg/pipeline.hpp"
#include "mobiseg/rng.hpp"
#include "mobiseg/segregation.hpp"
#include "mobiseg/simulate.hpp"
#include "mobiseg/stats.hpp"
#include "mobiseg/stays.hpp"
#include "mobiseg/synthworld.hpp"
#include "mobiseg/transit.hpp"
#include "mobiseg/weights.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace mobiseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_root()
{
    const char* env = std::getenv("MOBISEG_ACCEPT_DIR");
    return env ? fs::path(env) : fs::temp_directory_path() / "mobiseg_acceptance";
}

fs::path fresh_dir(const std::string& name)
{
    const auto dir = work_root() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Independent oracles

double direct_ice(double n, double f, double o, const NationalShares& s)
{
    const double num = n * s.foreign * s.other - f * s.native * s.other;
    const double den = n * s.foreign * s.other + f * s.native * s.other + o * s.native * s.foreign;
    return num / den;
}

double direct_cutpoint(const std::vector<double>& w)
{
    std::vector<double> v;
    for (double x : w)
        if (x > 0)
            v.push_back(x);
    double sum = 0;
    for (double x : v)
        sum += x;
    const double n = static_cast<double>(v.size());
    const double m = sum / n;
    double var = 0;
    for (double x : v)
        var += (x - m) * (x - m);
    var /= n;
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    const double med = k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
    return 3.5 * std::sqrt(1.0 + var / (m * m)) * med;
}

const GeoPoint kCenter{57.70, 11.97};
constexpr Timestamp kMonday = 1567375200; // 2019-09-02 00:00 local

GeoPoint at(double east_m, double north_m) { return LocalProjection(kCenter).inverse({east_m, north_m}); }

// ---------------------------------------------------------------------------
// Pipeline output helpers

std::map<std::string, std::map<std::string, std::string>> load_rows(const std::string& path)
{
    const CsvData d = read_csv(path);
    const std::size_t id = d.require("device_id");
    std::map<std::string, std::map<std::string, std::string>> out;
    for (const auto& row : d.rows) {
        auto& m = out[row[id]];
        for (std::size_t k = 0; k < d.header.size(); ++k)
            m[d.header[k]] = row[k];
    }
    return out;
}

std::optional<double> num(const std::map<std::string, std::string>& row, const std::string& key)
{
    const auto it = row.find(key);
    if (it == row.end() || it->second.empty())
        return std::nullopt;
    return parse_double(it->second);
}

PipelineConfig world_config(const std::string& toml, const fs::path& out)
{
    Config cfg = Config::parse(toml);
    cfg.set("pipeline.out", out.string());
    return PipelineConfig::from_config(cfg);
}

double run_until(const PipelineConfig& cfg, Stage last)
{
    const auto t0 = std::chrono::steady_clock::now();
    Pipeline p(cfg);
    std::vector<Stage> stages;
    for (Stage s : all_stages()) {
        stages.push_back(s);
        if (s == last)
            break;
    }
    p.run(stages);
    return seconds_since(t0);
}

// ---------------------------------------------------------------------------
// Criteria

Outcome ice_equivalence()
{
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const NationalShares s;
    double worst_adj = 0;
    double worst_orig = 0;
    Stream rng(derive_key(101, {}));
    for (int k = 0; k < 100000; ++k) {
        Composition c{rng.uniform(0, 500), rng.uniform(0, 500), rng.uniform(0, 500)};
        if (k % 10 == 0)
            c.other = 0;
        if (k % 17 == 0)
            c.native = std::floor(c.native);
        const auto a = ice_adjusted(c, s);
        const auto b = ice_original(c);
        if (!a || !b) {
            o.require(false, "undefined ICE on a non-empty composition");
            break;
        }
        worst_adj = std::max(worst_adj, std::abs(*a - direct_ice(c.native, c.foreign, c.other, s)));
        worst_orig = std::max(worst_orig, std::abs(*b - (c.native - c.foreign) / c.total()));
    }
    o.require(worst_adj <= 1e-12, "adjusted ICE deviation " + fmt("%.3g", worst_adj));
    o.require(worst_orig <= 1e-12, "original ICE deviation " + fmt("%.3g", worst_orig));
    o.require(ice_adjusted({10, 0, 0}, s) == 1.0, "F=O=0 gives +1");
    o.require(ice_adjusted({0, 10, 0}, s) == -1.0, "N=O=0 gives -1");
    bool national = ice_adjusted({s.native, s.foreign, s.other}, s) == 0.0;
    for (double k : {1.0, 2.0, 5.0, 10.0, 1000.0, 1e5})
        national = national && ice_adjusted({804 * k, 111 * k, 85 * k}, s) == 0.0;
    o.require(national, "national proportions give 0");
    o.require(!ice_adjusted({0, 0, 0}, s), "empty composition is undefined");
    const double secs = seconds_since(t0);
    o.require(secs < 5.0, "runtime under 5 s");
    o.note("max deviation " + fmt("%.2g", std::max(worst_adj, worst_orig)) + ", " + fmt("%.2f s", secs));
    return o;
}

Outcome trimming()
{
    Outcome o;
    double worst = 0;
    bool idempotent = true;
    bool capped = true;
    for (int k = 0; k < 1000; ++k) {
        Stream rng(derive_key(102, {static_cast<std::uint64_t>(k)}));
        const int n = 2 + static_cast<int>(rng.below(300));
        std::vector<double> w;
        for (int i = 0; i < n; ++i) {
            const double u = rng.uniform();
            w.push_back(u < 0.05 ? rng.uniform(50, 500) : std::exp(rng.normal() * 0.8) * 10.0);
        }
        const double w0 = trim_cutpoint(w);
        const double ref = direct_cutpoint(w);
        worst = std::max(worst, std::abs(w0 - ref) / ref);
        auto once = w;
        trim_weights(once, w0);
        auto twice = once;
        trim_weights(twice, w0);
        idempotent = idempotent && once == twice;
        for (double x : once)
            capped = capped && x <= w0;
    }
    o.require(worst <= 1e-12, "cut-point relative deviation " + fmt("%.3g", worst));
    o.require(idempotent, "trimming twice equals trimming once");
    o.require(capped, "trimmed weights stay at or below the cut-point");
    o.note("max relative deviation " + fmt("%.2g", worst));
    return o;
}

Outcome stay_oracle()
{
    Outcome o;
    const StayParams params;
    std::size_t total = 0;
    for (int trace = 0; trace < 500; ++trace) {
        Stream rng(derive_key(103, {static_cast<std::uint64_t>(trace)}));
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
        if (fast != detect_stays_brute_force(f, params)) {
            o.require(false, "trace " + std::to_string(trace) + " differs from the brute-force reference");
            break;
        }
        total += fast.size();
    }
    o.require(total > 300, "random traces produce stays");

    WorldConfig c;
    c.seed = 13;
    c.n_zones = 60;
    c.n_agents = 300;
    c.n_pois = 800;
    c.days = 28;
    c.jitter_m = 0.0;
    c.dropout = 0.0;
    const World w = gen_world(c);
    const Trajectories traj = gen_trajectories(w, c);
    const StaySet stays = detect_stays(traj.fixes, params);
    std::size_t visits = 0;
    std::size_t mismatched = 0;
    for (std::size_t k = 0; k < w.agents.size(); ++k) {
        const auto got = stays.device(k);
        const auto& want = traj.visits[k];
        if (got.size() != want.size()) {
            ++mismatched;
            continue;
        }
        for (std::size_t i = 0; i < want.size(); ++i)
            if (got[i].center != want[i].point || got[i].start != want[i].start || got[i].end != want[i].end)
                ++mismatched;
        visits += want.size();
    }
    o.require(stays.device_count() == w.agents.size(), "every agent has a device");
    o.require(mismatched == 0, std::to_string(mismatched) + " planted visits not recovered");
    o.note(std::to_string(total) + " stays on 500 traces, " + std::to_string(visits) + " planted visits recovered");
    return o;
}

Outcome interval_spanning()
{
    Outcome o;
    const LocalClock clock;
    const Timestamp day = kMonday + 86400;
    std::vector<int> got;
    for (auto i : intervals_spanned(day + 8 * 3600, day + 9 * 3600, clock))
        got.push_back(i.value);
    o.require(got == std::vector<int>{17, 18}, "08:00-09:00 spans {17, 18}");
    std::vector<int> hits(kSecondsPerDay, 0);
    for (int i = 1; i <= kIntervalsPerDay; ++i) {
        const Timestamp a = day + (i - 1) * kIntervalSeconds;
        const auto s = intervals_spanned(a, a + kIntervalSeconds, clock);
        o.require(s.size() == 1 && s[0].value == i, "slot " + std::to_string(i) + " maps to itself");
        for (int t = 0; t < kIntervalSeconds; ++t)
            ++hits[static_cast<std::size_t>((i - 1) * kIntervalSeconds + t)];
    }
    bool partition = true;
    for (int t = 0; t < kSecondsPerDay; ++t)
        partition = partition && hits[static_cast<std::size_t>(t)] == 1 &&
                    interval_of(t).value == t / kIntervalSeconds + 1;
    o.require(partition, "48 slots partition the day");
    // A whole day touches every slot exactly once.
    o.require(intervals_spanned(day, day + 86400, clock).size() == 48, "a full day spans 48 slots");
    return o;
}

Schedule random_schedule(Stream& rng, int stops, int trips, double span_m)
{
    Schedule s;
    for (int k = 0; k < stops; ++k)
        s.stops.push_back({"s" + std::to_string(k), at(rng.uniform(0, span_m), rng.uniform(0, span_m))});
    int total = 0;
    for (int t = 0; t < trips && total < 500; ++t) {
        s.trip_ids.push_back("t" + std::to_string(t));
        int from = static_cast<int>(rng.below(static_cast<std::uint64_t>(stops)));
        int time = 7 * 3600 + static_cast<int>(rng.below(3 * 3600));
        const int hops = 1 + static_cast<int>(rng.below(8));
        for (int h = 0; h < hops && total < 500; ++h) {
            int to = static_cast<int>(rng.below(static_cast<std::uint64_t>(stops)));
            if (to == from)
                to = (to + 1) % stops;
            const int ride = 60 + static_cast<int>(rng.below(600));
            s.connections.push_back({from, to, time, time + ride, t, 0x7F});
            ++total;
            time += ride + static_cast<int>(rng.below(120));
            from = to;
        }
    }
    std::sort(s.connections.begin(), s.connections.end(), [](const Connection& a, const Connection& b) {
        return std::tie(a.departure, a.arrival, a.trip, a.from_stop) <
               std::tie(b.departure, b.arrival, b.trip, b.from_stop);
    });
    return s;
}

GridCell make_cell(std::string id, GeoPoint p, std::int64_t jobs)
{
    GridCell c;
    c.id = std::move(id);
    c.size_m = 250;
    c.centroid = p;
    c.jobs = jobs;
    return c;
}

bool monotone_and_grounded(const TransitNetwork& net, const std::vector<GridCell>& cells, std::size_t origins)
{
    for (std::size_t origin = 0; origin < std::min(origins, cells.size()); ++origin) {
        const int cell = static_cast<int>(origin);
        for (int depart : {7 * 3600, 8 * 3600 + 900}) {
            if (net.opportunities(cell, depart, 0.0) != cells[origin].jobs)
                return false;
            std::int64_t prev = 0;
            for (double budget : {0.0, 5.0, 10.0, 20.0, 30.0, 45.0, 60.0, 120.0}) {
                const auto a = net.opportunities(cell, depart, budget);
                if (a < prev)
                    return false;
                prev = a;
            }
        }
    }
    return true;
}

Outcome routing()
{
    Outcome o;
    int queries = 0;
    bool equal = true;
    bool monotone = true;
    for (int n = 0; n < 200 && equal; ++n) {
        Stream rng(derive_key(109, {static_cast<std::uint64_t>(n)}));
        const int stops = 5 + static_cast<int>(rng.below(46));
        const Schedule s = random_schedule(rng, stops, 120, 6000);
        std::vector<GridCell> cells;
        for (int k = 0; k < 30; ++k)
            cells.push_back(make_cell("c" + std::to_string(k), at(rng.uniform(0, 6000), rng.uniform(0, 6000)), 1 + k));
        TransitParams p;
        p.max_walk_m = rng.uniform(300, 1500);
        const TransitNetwork net(s, cells, p);
        for (int q = 0; q < 3; ++q) {
            const GeoPoint origin = at(rng.uniform(0, 6000), rng.uniform(0, 6000));
            const int depart = 7 * 3600 + static_cast<int>(rng.below(2 * 3600));
            const auto a = net.earliest_arrival(origin, depart);
            const auto b = net.earliest_arrival_reference(origin, depart);
            equal = equal && a.stop == b.stop && a.cell == b.cell;
            ++queries;
        }
        monotone = monotone && monotone_and_grounded(net, cells, 10);
    }
    o.require(equal, "connection scan equals the time-expanded reference");

    // The synthetic world's own timetable is a fixture too.
    WorldConfig c;
    c.seed = 19;
    c.n_zones = 80;
    c.n_agents = 20;
    c.n_pois = 200;
    c.days = 2;
    const World w = gen_world(c);
    const auto dir = fresh_dir("routing_world");
    write_world(w, gen_trajectories(w, c), dir.string());
    const auto cells = read_grids((dir / "grids.csv").string());
    const TransitNetwork world_net(read_gtfs((dir / "gtfs").string()), cells);
    monotone = monotone && monotone_and_grounded(world_net, cells, 40);
    o.require(monotone, "opportunities are monotone in the budget and budget 0 gives the origin cell's jobs");
    o.note(std::to_string(queries) + " queries on 200 networks");
    return o;
}

Outcome statistics()
{
    Outcome o;
    o.require(effect_label(0.34) == EffectLabel::small, "0.34 is Small");
    o.require(effect_label(1.81) == EffectLabel::large, "1.81 is Large");
    o.require(effect_label(0.19999) == EffectLabel::very_small && effect_label(0.2) == EffectLabel::small &&
                  effect_label(0.49999) == EffectLabel::small && effect_label(0.5) == EffectLabel::medium &&
                  effect_label(0.79999) == EffectLabel::medium && effect_label(0.8) == EffectLabel::large &&
                  effect_label(-1.81) == EffectLabel::large,
              "label boundaries 0.2, 0.5, 0.8");

    double worst = 0;
    for (int k = 0; k < 200; ++k) {
        Stream rng(derive_key(110, {static_cast<std::uint64_t>(k)}));
        WeightedSample a;
        WeightedSample b;
        WeightedSample ea;
        WeightedSample eb;
        const int na = 1 + static_cast<int>(rng.below(20));
        const int nb = 1 + static_cast<int>(rng.below(20));
        for (int i = 0; i < na + nb; ++i) {
            const double v = std::round(rng.normal() * 4.0) / 2.0;
            const int w = 1 + static_cast<int>(rng.below(5));
            (i < na ? a : b).push(v, w);
            for (int r = 0; r < w; ++r)
                (i < na ? ea : eb).push(v, 1.0);
        }
        for (Alternative alt : {Alternative::two_sided, Alternative::less, Alternative::greater}) {
            const auto x = weighted_mann_whitney_u(a, b, alt);
            const auto y = weighted_mann_whitney_u(ea, eb, alt);
            worst = std::max({worst, std::abs(x.u - y.u), std::abs(x.p - y.p)});
        }
    }
    o.require(worst <= 1e-12, "weighted MWU equals the duplicated-observation MWU");

    const auto constant = weighted_bootstrap_median(WeightedSample{{0.7, 0.7, 0.7}, {1.0, 3.0, 0.5}}, 1000, 5);
    o.require(constant.error == 0.0 && constant.median == 0.7, "bootstrap error of constant data is 0");
    o.note("max MWU difference " + fmt("%.2g", worst));
    return o;
}

Outcome random_mixing(const fs::path& dir)
{
    Outcome o;
    const auto cfg = world_config(R"([pipeline]
seed = 1
[world]
seed = 5
agents = 10000
lambda_res = 0.0
lambda_hom = 0.0
[segregation]
thresholds = "derive"
)",
                                  dir);
    const double secs = run_until(cfg, Stage::exposure);
    const auto indiv = load_rows((dir / "segregate" / "individuals.csv").string());
    const auto groups = load_rows((dir / "classify" / "groups.csv").string());
    const auto exposure = load_rows((dir / "exposure" / "individuals.csv").string());
    const CsvData null = read_csv((dir / "exposure" / "null.csv").string());

    WeightedSample ice;
    std::size_t classified = 0;
    std::size_t mixed = 0;
    for (const auto& [id, row] : indiv) {
        const auto e = num(row, "ice_e");
        if (e)
            ice.push(*e, *num(row, "weight"));
        const auto& g = groups.at(id);
        if (g.at("experienced").empty())
            continue;
        ++classified;
        mixed += g.at("experienced") == "M" ? 1 : 0;
    }
    const double med = weighted_median(ice);
    const double share = static_cast<double>(mixed) / static_cast<double>(classified);

    std::map<std::string, double> baseline;
    for (const auto& row : null.rows)
        baseline[row[null.require("target")]] = *parse_double(row[null.require("baseline")]);
    double worst = 0;
    for (const char* group : {"N", "F", "M"}) {
        for (const char* target : {"N", "F", "M"}) {
            WeightedSample dev;
            for (const auto& [id, row] : exposure) {
                const std::string column = target[0] == 'N' ? "to_n" : target[0] == 'F' ? "to_f" : "to_m";
                const auto share_to = num(row, column);
                if (row.at("group") != group || !share_to)
                    continue;
                dev.push(*share_to - baseline.at(target), *num(indiv.at(id), "weight"));
            }
            if (!dev.empty())
                worst = std::max(worst, std::abs(weighted_median(dev)));
        }
    }
    o.require(std::abs(med) <= 0.02, "median ICE_e within 0.02 of 0");
    o.require(share >= 0.95, "at least 95% classified M");
    o.require(worst <= 0.02, "exposure deviation medians within 2 pp");
    o.require(secs < 300, "runtime under 5 min");
    o.note("median ICE_e " + fmt("%.4f", med) + ", M share " + fmt("%.3f", share) + " of " +
           std::to_string(classified) + ", max |deviation median| " + fmt("%.2f pp", 100 * worst) + ", " +
           fmt("%.0f s", secs));
    return o;
}

struct Paired {
    WeightedSample empirical;
    WeightedSample simulated;
};

Paired group_pairs(const fs::path& dir, const std::string& kind, const std::string& group, bool absolute)
{
    const auto indiv = load_rows((dir / "segregate" / "individuals.csv").string());
    const auto groups = load_rows((dir / "classify" / "groups.csv").string());
    const auto sim = load_rows((dir / "simulate" / (kind + ".csv")).string());
    Paired out;
    for (const auto& [id, row] : indiv) {
        if (groups.at(id).at("group") != group)
            continue;
        const auto e = num(row, "ice_e");
        const auto s = num(sim.at(id), "ice_e");
        if (!e || !s)
            continue;
        const double w = *num(row, "weight");
        out.empirical.push(absolute ? std::abs(*e) : *e, w);
        out.simulated.push(absolute ? std::abs(*s) : *s, w);
    }
    return out;
}

Outcome homophily(const fs::path& dir)
{
    Outcome o;
    const auto cfg = world_config(R"([pipeline]
seed = 1
[world]
seed = 6
agents = 10000
lambda_res = 0.5
lambda_hom = 1.0
[segregation]
thresholds = "derive"
[simulate]
kinds = ["no-pref"]
no_pref_reps = 20
)",
                                  dir);
    run_until(cfg, Stage::simulate);
    const Paired f = group_pairs(dir, "no-pref", "F", true);
    o.require(f.empirical.size() >= 20, "group F has members");
    if (!o.pass)
        return o;
    const auto test = weighted_mann_whitney_u(f.simulated, f.empirical, Alternative::less);
    const auto d = cohens_d(f.empirical, f.simulated);
    o.require(test.p < 0.01, "one-sided weighted MWU p < 0.01");
    o.require(d.has_value(), "effect size defined");
    o.note("F n=" + std::to_string(f.empirical.size()) + ", median |ICE_e| " +
           fmt("%.3f", weighted_median(f.empirical)) + " -> " + fmt("%.3f", weighted_median(f.simulated)) +
           ", p=" + fmt("%.2g", test.p) + (d ? ", d=" + fmt("%.2f", d->d) + " (" + to_string(d->label) + ")" : ""));
    return o;
}

Outcome mobility_range(const fs::path& dir)
{
    Outcome o;
    const auto cfg = world_config(R"([pipeline]
seed = 1
[world]
seed = 7
agents = 10000
lambda_res = 0.5
lambda_hom = 0.0
decay = [3.5, 1.2, 1.2]
[segregation]
thresholds = "derive"
[simulate]
kinds = ["equalized"]
equalized_reps = 20
)",
                                  dir);
    run_until(cfg, Stage::simulate);
    const CsvData t = read_csv((dir / "classify" / "thresholds.csv").string());
    const double lo = *parse_double(t.rows.at(0)[t.require("lo")]);
    const Paired raw = group_pairs(dir, "equalized", "F", false);
    const Paired abs = group_pairs(dir, "equalized", "F", true);
    o.require(raw.empirical.size() >= 20, "group F has members");
    if (!o.pass)
        return o;
    const auto sig = one_sample_test(raw.empirical.values, lo, Alternative::less);
    const double sim_med = weighted_median(abs.simulated);
    const auto d = cohens_d(abs.empirical, abs.simulated);
    o.require(sig.p < 0.001, "empirical F ICE_e significantly below the lower threshold");
    o.require(sim_med < std::abs(lo), "equalized median |ICE_e| below the threshold");
    o.require(d && d->label == EffectLabel::large, "Cohen's d labelled Large");
    o.note("F n=" + std::to_string(raw.empirical.size()) + ", threshold " + fmt("%.3f", lo) + ", median ICE_e " +
           fmt("%.3f", weighted_median(raw.empirical)) + ", p=" + fmt("%.2g", sig.p) + ", equalized median |ICE_e| " +
           fmt("%.3f", sim_med) + (d ? ", d=" + fmt("%.2f", d->d) + " (" + to_string(d->label) + ")" : ""));
    return o;
}

Outcome residential_randomization()
{
    Outcome o;
    WorldConfig c;
    c.seed = 8;
    c.n_agents = 10000;
    c.n_zones = 500;
    c.n_pois = 500;
    c.days = 1;
    c.population_per_agent = 85.0;
    c.lambda_res = 0.5;
    const World w = gen_world(c);
    std::vector<IndividualProfile> profiles;
    double residents = 0;
    for (std::size_t k = 0; k < w.agents.size(); ++k) {
        IndividualProfile p;
        p.device = static_cast<int>(k);
        p.home_census_zone = w.agents[k].home_zone;
        profiles.push_back(p);
    }
    for (const auto& z : w.zones)
        residents += z.composition.total();
    const ResidentialNull null = sim_residential_randomization(profiles, w.zones, 100, derive_key(8, {1}), c.shares);
    const double center = null.mean - null.analytic_mean;
    const double asym = null.thresholds.hi + null.thresholds.lo;
    o.require(std::abs(center) <= 0.02, "null mean within 0.02 of the analytic mean");
    o.require(std::abs(asym) <= 0.02, "thresholds symmetric within 0.02");
    o.note(std::to_string(w.zones.size()) + " zones, " + fmt("%.0f", residents / static_cast<double>(w.zones.size())) +
           " residents per zone, mean " + fmt("%.4f", null.mean) + " vs " + fmt("%.4f", null.analytic_mean) +
           ", thresholds [" + fmt("%.3f", null.thresholds.lo) + ", " + fmt("%.3f", null.thresholds.hi) + "]");
    return o;
}

Outcome determinism()
{
    Outcome o;
    const std::string toml = R"([pipeline]
seed = 1
[world]
seed = 1
agents = 10000
days = 100
[segregation]
thresholds = "derive"
)";
    const std::vector<std::string> reports{"table1.csv", "table_s5.csv", "table_s6.csv", "table_s7.csv",
                                           "correlations.csv"};
    std::vector<fs::path> dirs;
    std::vector<double> secs;
    std::size_t fixes = 0;
    for (unsigned workers : {1u, 1u, 8u}) {
        const auto dir = fresh_dir("full_" + std::to_string(dirs.size()));
        auto cfg = world_config(toml, dir);
        cfg.workers = workers;
        secs.push_back(run_until(cfg, Stage::stats_report));
        dirs.push_back(dir);
        if (fixes == 0) {
            const std::string text = slurp(dir / "world" / "fixes.csv");
            fixes = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) - 1;
        }
    }
    for (const auto& f : reports) {
        const std::string a = slurp(dirs[0] / "stats-report" / f);
        o.require(!a.empty(), f + " written");
        o.require(a == slurp(dirs[1] / "stats-report" / f), f + " identical across runs");
        o.require(a == slurp(dirs[2] / "stats-report" / f), f + " identical across 1 and 8 workers");
    }
    o.require(secs[0] < 600, "full run under 10 min");
    o.note(std::to_string(fixes) + " fixes; runs " + fmt("%.0f s", secs[0]) + ", " + fmt("%.0f s", secs[1]) + ", " +
           fmt("%.0f s", secs[2]) + " (8 workers)");
    return o;
}

} // namespace

int main()
{
    set_quiet(true);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"ICE oracle equivalence", ice_equivalence},
        {"weight trimming", trimming},
        {"stay-detection oracle", stay_oracle},
        {"interval spanning", interval_spanning},
        {"random-mixing null", [] { return random_mixing(fresh_dir("random_mixing")); }},
        {"planted homophily recovery", [] { return homophily(fresh_dir("homophily")); }},
        {"planted mobility-range recovery", [] { return mobility_range(fresh_dir("mobility_range")); }},
        {"residential randomization", residential_randomization},
        {"routing optimality", routing},
        {"statistics conformance", statistics},
        {"determinism and performance", determinism},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
