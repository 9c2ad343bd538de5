#pragma once

#include "mobiseg/formats.hpp"
#include "mobiseg/stays.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace mobiseg {

/// Fix counts f_i per local half-hour slot over the whole observation period.
using IntervalHistogram = std::array<std::int64_t, kIntervalsPerDay>;

IntervalHistogram interval_histogram(std::span<const Fix> fixes, const LocalClock& clock = {});

/// Sum of w_i = 1/f_i over the slots spanned by [start, end), split at local
/// midnights. Slots with f_i = 0 contribute 0.
double stay_weight(Timestamp start, Timestamp end, const IntervalHistogram& f, const LocalClock& clock = {});

/// Fills Stay::weight for every device of `stays` that appears in `fixes`.
/// Returns the number of devices with at least one unobserved spanned slot.
std::size_t assign_stay_weights(StaySet& stays, const FixSet& fixes, const LocalClock& clock = {});

/// Cut-point 3.5 * sqrt(1 + CV^2) * Med over the positive weights (CV with
/// population standard deviation). 0 when no weight is positive.
double trim_cutpoint(std::span<const double> weights);
/// Clips every weight at w0.
void trim_weights(std::span<double> weights, double w0);

struct PopulationWeights {
    std::vector<double> raw;     ///< per profile
    std::vector<double> trimmed; ///< per profile
    double cutpoint = 0.0;
};

/// Inverse-probability weights: home-zone population over the number of
/// devices living there, trimmed once at the cut-point of the raw weights.
PopulationWeights population_weights(const std::vector<IndividualProfile>& profiles,
                                     const std::vector<CensusZone>& census);

/// device_id,home_zone,raw_weight,weight
void write_population_weights(const std::vector<IndividualProfile>& profiles, const PopulationWeights& w,
                              const StaySet& stays, const std::vector<CensusZone>& census, const std::string& path);
/// Trimmed weights aligned with `profiles`; every profile must be present.
std::vector<double> read_population_weights(const std::string& path, const std::vector<IndividualProfile>& profiles,
                                            const StaySet& stays);

} // namespace mobiseg
