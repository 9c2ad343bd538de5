#pragma once

#include "mobiseg/config.hpp"
#include "mobiseg/formats.hpp"
#include "mobiseg/segregation.hpp"
#include "mobiseg/simulate.hpp"
#include "mobiseg/stays.hpp"
#include "mobiseg/synthworld.hpp"
#include "mobiseg/transit.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobiseg {

enum class Stage { synth, detect_stays, homes, weights, zones, segregate, classify, simulate, access, exposure, stats_report };

/// Every stage in dependency order.
const std::vector<Stage>& all_stages();
std::string to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);
bool is_stochastic(Stage s);
const std::vector<Stage>& dependencies(Stage s);

/// 64-bit FNV-1a of a file's bytes; a directory hashes its files in name order.
std::uint64_t fnv1a_file(const std::string& path);
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

struct PipelineConfig {
    Config config;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    unsigned workers = 1;

    bool has_world = false;
    WorldConfig world;
    std::string fixes;
    std::string zones;
    std::string grids;
    std::string pois;
    std::string gtfs;
    std::string holidays;   ///< empty: the built-in 2019 Swedish school holidays
    std::string categories; ///< empty: the standard 33 categories
    double max_malformed = 0.1;

    StayParams stays;
    FilterRules filter;
    LocalClock clock;
    NationalShares shares;
    std::optional<Thresholds> thresholds; ///< empty: derive by residential randomization
    int residential_reps = 100;
    std::vector<SimKind> sim_kinds{SimKind::no_pref, SimKind::equalized};
    SimConfig no_pref = SimConfig::defaults(SimKind::no_pref);
    SimConfig equalized = SimConfig::defaults(SimKind::equalized);
    int exposure_reps = 100;
    TransitParams access;
    int bootstrap_reps = 1000;

    /// Relative input paths are resolved against `base_dir`. Inputs left unset
    /// default to the synthetic world under `<out>/world` when [world] is present.
    static PipelineConfig from_config(const Config& config, const std::string& base_dir = ".");
    /// Re-derives defaulted input paths after out_dir changes.
    void resolve_inputs();
    std::uint64_t require_seed(Stage s) const;

  private:
    std::string base_dir_ = ".";
    std::map<std::string, std::string> explicit_inputs_;
};

struct StageReport {
    Stage stage;
    bool cached = false;
    double seconds = 0.0;
    std::vector<std::string> notes;
};

/// Runs stages with manifest-based caching. Artifacts live in
/// `<out>/<stage>/`; each stage directory holds a manifest.json recording
/// input hashes, the seed, the relevant configuration and output hashes.
class Pipeline {
  public:
    explicit Pipeline(PipelineConfig config);
    ~Pipeline();

    const PipelineConfig& config() const { return cfg_; }
    /// Runs the given stages in dependency order.
    std::vector<StageReport> run(std::span<const Stage> stages);
    StageReport run(Stage s);

    std::string stage_dir(Stage s) const;
    std::string artifact(Stage s, const std::string& name) const;

  private:
    struct Cache;

    std::vector<std::string> inputs(Stage s) const;
    std::vector<std::string> outputs(Stage s) const;
    std::string config_digest(Stage s) const;
    void execute(Stage s, StageReport& report);

    PipelineConfig cfg_;
    std::unique_ptr<Cache> cache_;
};

} // namespace mobiseg
