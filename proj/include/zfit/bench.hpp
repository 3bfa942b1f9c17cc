#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zfit/datagen.hpp"
#include "zfit/loss.hpp"
#include "zfit/solver.hpp"

namespace zfit {

/// How each (spectrum, loss) task drives the solver.
enum class GlobalMethod { None, Basinhop };

/// Settings for a benchmark run.
struct BenchOptions {
    std::vector<LossKind> losses{kAllLossKinds.begin(), kAllLossKinds.end()};
    FitOptions fit;
    BasinHopOptions hops;
    GlobalMethod method = GlobalMethod::None;
    /// Paired runs give every loss the same initial-guess stream on a given
    /// spectrum, so timing and convergence differences are attributable to
    /// the loss alone.
    bool paired = true;
    int jobs = 1;
    double prescreen_threshold_pct = 100.0;
    std::uint64_t rng_seed = 1;

    void validate() const;
};

/// Outcome of one (spectrum, loss) task.
struct BenchRecord {
    std::string id;
    LossKind loss = LossKind::UW;
    bool failed = false;     // the fit threw; outcome is default-initialized
    std::string error;
    FitOutcome outcome;
};

/// Five-number summary plus mean and outlier count, Tukey convention:
/// whiskers reach the outermost data within 1.5 IQR of the quartile box.
struct BoxStats {
    double mean = 0.0;
    double q25 = 0.0;
    double q50 = 0.0;
    double q75 = 0.0;
    double lo_whisker = 0.0;
    double hi_whisker = 0.0;
    int outliers = 0;
};

struct ConvergenceRow {
    LossKind loss;
    int count;
    double rate;
};

struct RetentionRow {
    std::string circuit;
    LossKind loss;
    double retained_fraction;
};

struct SummaryRow {
    LossKind loss;
    std::string metric;  // "chi2", "r2_score", "r2_mag", "r2_phase", "time_s"
    BoxStats stats;
};

struct MapeCsvRow {
    std::string circuit;
    LossKind loss;
    std::string component;  // schema names plus "Average"
    double value;
};

struct RadarRow {
    LossKind loss;
    std::string metric;
    double value;  // in [0, 1]; higher is better on every axis
};

/// Full benchmark report: the four CSV tables plus provenance.
struct BenchReport {
    std::vector<LossKind> losses;
    int dataset_size = 0;
    std::vector<ConvergenceRow> convergence;
    std::vector<LossKind> mutual_subset;
    std::vector<std::string> mutual_ids;  // sorted
    std::vector<RetentionRow> retention;
    std::vector<SummaryRow> summary;
    std::vector<MapeCsvRow> mape_rows;
    std::vector<RadarRow> radar;
    std::string manifest_hash;  // empty when the dataset was not read from disk
    BenchOptions options;
};

/// The metric column tokens, in report order.
const std::vector<std::string>& metric_tokens();

/// Type-7 (linear interpolation) quantile of sorted data, p in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Box statistics of a nonempty sample.
BoxStats box_stats(std::vector<double> values);

/// Fits every spectrum with every loss in options.losses. Per-task RNG
/// streams derive from options.rng_seed, the spectrum id and, for unpaired
/// runs, the loss token. When raw_path is given, finished records append to
/// it as JSON lines in task order and records already present are reused
/// instead of refit. Fit errors become failed records, never exceptions.
std::vector<BenchRecord> run_benchmark(const std::vector<LabeledSpectrum>& dataset,
                                       const BenchOptions& options,
                                       const std::optional<std::filesystem::path>& raw_path = {});

/// Ids converged under every loss in the subset, sorted.
std::vector<std::string> mutual_converged(const std::vector<BenchRecord>& records,
                                          const std::vector<LossKind>& subset);

/// The default comparison population: the weighted losses
/// {x2, pw, log-b, log-bw} restricted to the losses actually run.
std::vector<LossKind> default_mutual_subset(const std::vector<LossKind>& run_losses);

/// Parameter-recovery screen over the mutual set: a fit is retained when no
/// component's APE exceeds threshold_pct.
struct PrescreenResult {
    std::map<LossKind, std::vector<std::string>> retained;  // sorted ids per loss
    std::vector<RetentionRow> table;
};

PrescreenResult prescreen(const std::vector<BenchRecord>& records,
                          const std::vector<LabeledSpectrum>& dataset,
                          const std::vector<std::string>& mutual_ids, double threshold_pct);

/// Box statistics per loss and metric over the given ids.
std::vector<SummaryRow> summarize(const std::vector<BenchRecord>& records,
                                  const std::vector<std::string>& ids,
                                  const std::vector<LossKind>& losses);

/// Min-max normalization of summary means across losses, one value per
/// (loss, metric). Time and chi2 are inverted so 1 is always best; a metric
/// whose means all coincide maps to 0.5 everywhere.
std::vector<RadarRow> radar_normalize(const std::vector<SummaryRow>& summary);

/// Runs the whole pipeline over finished records.
BenchReport build_report(const std::vector<LabeledSpectrum>& dataset,
                         const std::vector<BenchRecord>& records, const BenchOptions& options,
                         const std::string& manifest_hash = "");

/// Writes convergence.csv, summary.csv, mape.csv, radar.csv and report.json
/// under dir. strip_times omits the time_s rows and wall-time fields, which
/// makes the outputs byte-identical across runs of the same seed.
void write_report(const std::filesystem::path& dir, const BenchReport& report,
                  bool strip_times = false);

} // namespace zfit
