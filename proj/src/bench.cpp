#include "zfit/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "zfit/error.hpp"
#include "zfit/io.hpp"
#include "zfit/metrics.hpp"
#include "zfit/rng.hpp"

namespace zfit {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json record_to_json(const BenchRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["loss"] = std::string(loss_token(r.loss));
    j["failed"] = r.failed;
    j["error"] = r.error;
    j["converged"] = r.outcome.converged;
    j["chi2"] = r.outcome.chi2;
    j["r2_score"] = r.outcome.r2_score;
    j["r2_magnitude"] = r.outcome.r2_magnitude;
    j["r2_phase"] = r.outcome.r2_phase;
    j["final_loss"] = r.outcome.final_loss;
    j["restarts_used"] = r.outcome.restarts_used;
    j["evaluations"] = r.outcome.evaluations;
    j["wall_time"] = r.outcome.wall_time;
    j["best_params"] = r.outcome.best_params;
    return j;
}

BenchRecord record_from_json(const ordered_json& j) {
    BenchRecord r;
    r.id = j.at("id").get<std::string>();
    const auto kind = parse_loss_token(j.at("loss").get<std::string>());
    if (!kind) throw ConfigError("unknown loss token " + j.at("loss").get<std::string>());
    r.loss = *kind;
    r.failed = j.at("failed").get<bool>();
    r.error = j.at("error").get<std::string>();
    r.outcome.converged = j.at("converged").get<bool>();
    r.outcome.chi2 = j.at("chi2").get<double>();
    r.outcome.r2_score = j.at("r2_score").get<double>();
    r.outcome.r2_magnitude = j.at("r2_magnitude").get<double>();
    r.outcome.r2_phase = j.at("r2_phase").get<double>();
    r.outcome.final_loss = j.at("final_loss").get<double>();
    r.outcome.restarts_used = j.at("restarts_used").get<int>();
    r.outcome.evaluations = j.at("evaluations").get<long>();
    r.outcome.wall_time = j.at("wall_time").get<double>();
    r.outcome.best_params = j.at("best_params").get<ParameterSet>();
    return r;
}

std::string task_key(const std::string& id, LossKind loss) {
    return id + "\x1f" + std::string(loss_token(loss));
}

// Loads complete, well-formed lines of an existing raw file. A torn or
// corrupt tail (from an interrupted run) is dropped by rewriting the file
// with the valid prefix, so appending resumes from a clean state.
std::unordered_map<std::string, BenchRecord> load_raw(const std::filesystem::path& path) {
    std::unordered_map<std::string, BenchRecord> found;
    std::ifstream in(path, std::ios::binary);
    if (!in) return found;
    std::string line, valid;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            BenchRecord r = record_from_json(ordered_json::parse(line));
            found.emplace(task_key(r.id, r.loss), std::move(r));
            valid += line;
            valid += '\n';
        } catch (const std::exception&) {
            break;
        }
    }
    in.close();
    std::error_code ec;
    if (std::filesystem::file_size(path, ec) != valid.size() && !ec) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << valid;
    }
    return found;
}

double metric_value(const FitOutcome& o, const std::string& metric) {
    if (metric == "chi2") return o.chi2;
    if (metric == "r2_score") return o.r2_score;
    if (metric == "r2_mag") return o.r2_magnitude;
    if (metric == "r2_phase") return o.r2_phase;
    return o.wall_time;
}

} // namespace

void BenchOptions::validate() const {
    if (losses.empty()) throw ConfigError("benchmark needs at least one loss");
    for (std::size_t i = 0; i < losses.size(); ++i)
        for (std::size_t j = i + 1; j < losses.size(); ++j)
            if (losses[i] == losses[j])
                throw ConfigError("loss " + std::string(loss_token(losses[i])) +
                                  " listed more than once");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    if (!(prescreen_threshold_pct >= 0.0))
        throw ConfigError("prescreen threshold must be nonnegative");
    fit.validate();
    if (method == GlobalMethod::Basinhop) hops.validate();
}

const std::vector<std::string>& metric_tokens() {
    static const std::vector<std::string> kTokens = {"chi2", "r2_score", "r2_mag", "r2_phase",
                                                     "time_s"};
    return kTokens;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw ConfigError("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level must be in [0, 1]");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::vector<double> values) {
    if (values.empty()) throw ConfigError("box statistics of an empty sample");
    std::sort(values.begin(), values.end());
    BoxStats b;
    double sum = 0.0;
    for (double v : values) sum += v;
    b.mean = sum / static_cast<double>(values.size());
    b.q25 = quantile_sorted(values, 0.25);
    b.q50 = quantile_sorted(values, 0.50);
    b.q75 = quantile_sorted(values, 0.75);
    const double iqr = b.q75 - b.q25;
    const double lo_fence = b.q25 - 1.5 * iqr;
    const double hi_fence = b.q75 + 1.5 * iqr;
    b.lo_whisker = b.q25;
    b.hi_whisker = b.q75;
    for (double v : values)
        if (v >= lo_fence) {
            b.lo_whisker = v;
            break;
        }
    for (auto it = values.rbegin(); it != values.rend(); ++it)
        if (*it <= hi_fence) {
            b.hi_whisker = *it;
            break;
        }
    for (double v : values) b.outliers += v < lo_fence || v > hi_fence;
    return b;
}

std::vector<BenchRecord> run_benchmark(const std::vector<LabeledSpectrum>& dataset,
                                       const BenchOptions& options,
                                       const std::optional<std::filesystem::path>& raw_path) {
    options.validate();
    if (dataset.empty()) throw ConfigError("benchmark needs a nonempty dataset");

    // A circuit that fails to parse fails its records; the run always ends.
    std::unordered_map<std::string, CircuitModel> models;
    std::unordered_map<std::string, std::string> broken;
    for (const LabeledSpectrum& ls : dataset) {
        if (models.count(ls.circuit) || broken.count(ls.circuit)) continue;
        try {
            models.emplace(ls.circuit, CircuitModel::parse(ls.circuit));
        } catch (const std::exception& e) {
            broken.emplace(ls.circuit, e.what());
        }
    }

    std::unordered_map<std::string, BenchRecord> done;
    if (raw_path) done = load_raw(*raw_path);

    const std::size_t task_count = dataset.size() * options.losses.size();
    std::vector<BenchRecord> out(task_count);
    std::vector<char> ready(task_count, 0), reused(task_count, 0);

    auto run_task = [&](std::size_t t) {
        const LabeledSpectrum& ls = dataset[t / options.losses.size()];
        const LossKind loss = options.losses[t % options.losses.size()];
        if (auto it = done.find(task_key(ls.id, loss)); it != done.end()) {
            reused[t] = 1;
            return it->second;
        }
        BenchRecord rec;
        rec.id = ls.id;
        rec.loss = loss;
        if (const auto bad = broken.find(ls.circuit); bad != broken.end()) {
            rec.failed = true;
            rec.error = bad->second;
            return rec;
        }
        FitOptions fit = options.fit;
        fit.rng_seed = derive_stream(options.rng_seed, "fit", hash_bytes(ls.id),
                                     options.paired ? 0 : hash_bytes(loss_token(loss)));
        try {
            const CircuitModel& model = models.at(ls.circuit);
            rec.outcome = options.method == GlobalMethod::Basinhop
                              ? basinhop_fit(model, ls.spectrum, loss, fit, options.hops)
                              : fit_multistart(model, ls.spectrum, loss, fit);
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
            rec.outcome = FitOutcome{};
        }
        return rec;
    };

    std::ofstream raw_out;
    if (raw_path) {
        raw_out.open(*raw_path, std::ios::binary | std::ios::app);
        if (!raw_out) throw IoError("cannot open " + raw_path->string() + " for appending");
    }
    auto persist = [&](std::size_t t) {
        if (!raw_path || reused[t]) return;
        raw_out << record_to_json(out[t]).dump() << '\n';
        raw_out.flush();
        if (!raw_out) throw IoError("cannot write " + raw_path->string());
    };

    if (options.jobs == 1) {
        for (std::size_t t = 0; t < task_count; ++t) {
            out[t] = run_task(t);
            persist(t);
        }
        return out;
    }

    // Results are persisted in task order even though completion order
    // varies, so resumable raw files never contain gaps.
    std::mutex mu;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= task_count) return;
            BenchRecord rec = run_task(t);
            {
                const std::lock_guard<std::mutex> lock(mu);
                out[t] = std::move(rec);
                ready[t] = 1;
            }
            cv.notify_all();
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < options.jobs; ++w) pool.emplace_back(worker);
    {
        std::unique_lock<std::mutex> lock(mu);
        for (std::size_t t = 0; t < task_count; ++t) {
            cv.wait(lock, [&] { return ready[t] == 1; });
            persist(t);
        }
    }
    for (std::thread& w : pool) w.join();
    return out;
}

std::vector<std::string> mutual_converged(const std::vector<BenchRecord>& records,
                                          const std::vector<LossKind>& subset) {
    unsigned want = 0;
    for (LossKind k : subset) want |= 1u << static_cast<unsigned>(k);
    std::map<std::string, unsigned> got;
    for (const BenchRecord& r : records) {
        got.try_emplace(r.id, 0u);
        if (!r.failed && r.outcome.converged) got[r.id] |= 1u << static_cast<unsigned>(r.loss);
    }
    std::vector<std::string> ids;
    for (const auto& [id, mask] : got)
        if ((mask & want) == want) ids.push_back(id);
    return ids;
}

std::vector<LossKind> default_mutual_subset(const std::vector<LossKind>& run_losses) {
    std::vector<LossKind> subset;
    for (LossKind k : {LossKind::X2, LossKind::PW, LossKind::LogB, LossKind::LogBW})
        if (std::find(run_losses.begin(), run_losses.end(), k) != run_losses.end())
            subset.push_back(k);
    return subset;
}

PrescreenResult prescreen(const std::vector<BenchRecord>& records,
                          const std::vector<LabeledSpectrum>& dataset,
                          const std::vector<std::string>& mutual_ids, double threshold_pct) {
    std::unordered_map<std::string, const LabeledSpectrum*> by_id;
    for (const LabeledSpectrum& ls : dataset) by_id[ls.id] = &ls;
    // Parsed on demand: only circuits with mutually converged fits are
    // needed, so a malformed circuit elsewhere in the dataset cannot abort
    // the screen.
    std::unordered_map<std::string, CircuitModel> models;
    auto model_of = [&models](const std::string& circuit) -> const CircuitModel& {
        auto it = models.find(circuit);
        if (it == models.end()) it = models.emplace(circuit, CircuitModel::parse(circuit)).first;
        return it->second;
    };

    std::vector<LossKind> losses;
    for (const BenchRecord& r : records)
        if (std::find(losses.begin(), losses.end(), r.loss) == losses.end())
            losses.push_back(r.loss);
    std::vector<std::string> circuits;
    for (const LabeledSpectrum& ls : dataset)
        if (std::find(circuits.begin(), circuits.end(), ls.circuit) == circuits.end())
            circuits.push_back(ls.circuit);

    std::unordered_map<std::string, const BenchRecord*> by_key;
    for (const BenchRecord& r : records) by_key[task_key(r.id, r.loss)] = &r;

    PrescreenResult res;
    for (LossKind loss : losses) {
        std::map<std::string, int> population, kept;
        std::vector<std::string> retained;
        for (const std::string& id : mutual_ids) {
            const LabeledSpectrum* ls = by_id.at(id);
            ++population[ls->circuit];
            const auto rec = by_key.find(task_key(id, loss));
            if (rec == by_key.end() || rec->second->failed) continue;
            const ApeTable table =
                ape(model_of(ls->circuit), ls->true_params, rec->second->outcome.best_params);
            if (table.max() <= threshold_pct) {
                retained.push_back(id);
                ++kept[ls->circuit];
            }
        }
        for (const std::string& circuit : circuits) {
            const int pop = population.count(circuit) ? population[circuit] : 0;
            // An empty comparison population means the screen excluded
            // nothing; reported as full retention.
            const double fraction =
                pop == 0 ? 1.0 : static_cast<double>(kept[circuit]) / static_cast<double>(pop);
            res.table.push_back({circuit, loss, fraction});
        }
        res.retained.emplace(loss, std::move(retained));
    }
    return res;
}

std::vector<SummaryRow> summarize(const std::vector<BenchRecord>& records,
                                  const std::vector<std::string>& ids,
                                  const std::vector<LossKind>& losses) {
    const std::set<std::string> wanted(ids.begin(), ids.end());
    std::vector<SummaryRow> rows;
    for (LossKind loss : losses) {
        std::vector<const FitOutcome*> outcomes;
        for (const BenchRecord& r : records)
            if (r.loss == loss && !r.failed && wanted.count(r.id))
                outcomes.push_back(&r.outcome);
        if (outcomes.empty()) continue;
        for (const std::string& metric : metric_tokens()) {
            std::vector<double> values;
            values.reserve(outcomes.size());
            for (const FitOutcome* o : outcomes) values.push_back(metric_value(*o, metric));
            rows.push_back({loss, metric, box_stats(std::move(values))});
        }
    }
    return rows;
}

std::vector<RadarRow> radar_normalize(const std::vector<SummaryRow>& summary) {
    std::map<std::string, std::pair<double, double>> range;
    for (const SummaryRow& row : summary) {
        auto [it, fresh] = range.try_emplace(row.metric, row.stats.mean, row.stats.mean);
        if (!fresh) {
            it->second.first = std::min(it->second.first, row.stats.mean);
            it->second.second = std::max(it->second.second, row.stats.mean);
        }
    }
    std::vector<RadarRow> rows;
    for (const SummaryRow& row : summary) {
        const auto [mn, mx] = range.at(row.metric);
        double v = mx == mn ? 0.5 : (row.stats.mean - mn) / (mx - mn);
        if (mx != mn && (row.metric == "chi2" || row.metric == "time_s")) v = 1.0 - v;
        rows.push_back({row.loss, row.metric, v});
    }
    return rows;
}

BenchReport build_report(const std::vector<LabeledSpectrum>& dataset,
                         const std::vector<BenchRecord>& records, const BenchOptions& options,
                         const std::string& manifest_hash) {
    BenchReport rep;
    rep.losses = options.losses;
    rep.dataset_size = static_cast<int>(dataset.size());
    rep.manifest_hash = manifest_hash;
    rep.options = options;

    for (LossKind loss : options.losses) {
        int count = 0;
        for (const BenchRecord& r : records)
            count += r.loss == loss && !r.failed && r.outcome.converged;
        rep.convergence.push_back(
            {loss, count, static_cast<double>(count) / static_cast<double>(dataset.size())});
    }

    rep.mutual_subset = default_mutual_subset(options.losses);
    rep.mutual_ids = mutual_converged(records, rep.mutual_subset);

    const PrescreenResult pres =
        prescreen(records, dataset, rep.mutual_ids, options.prescreen_threshold_pct);
    rep.retention = pres.table;
    rep.summary = summarize(records, rep.mutual_ids, options.losses);
    rep.radar = radar_normalize(rep.summary);

    std::unordered_map<std::string, const LabeledSpectrum*> by_id;
    for (const LabeledSpectrum& ls : dataset) by_id[ls.id] = &ls;
    std::unordered_map<std::string, const BenchRecord*> by_key;
    for (const BenchRecord& r : records) by_key[task_key(r.id, r.loss)] = &r;
    std::vector<std::string> circuits;
    for (const LabeledSpectrum& ls : dataset)
        if (std::find(circuits.begin(), circuits.end(), ls.circuit) == circuits.end())
            circuits.push_back(ls.circuit);

    for (const std::string& circuit : circuits) {
        for (LossKind loss : options.losses) {
            const auto retained = pres.retained.find(loss);
            if (retained == pres.retained.end()) continue;
            std::vector<std::pair<const LabeledSpectrum*, const BenchRecord*>> kept;
            for (const std::string& id : retained->second) {
                const LabeledSpectrum* ls = by_id.at(id);
                if (ls->circuit == circuit) kept.emplace_back(ls, by_key.at(task_key(id, loss)));
            }
            if (kept.empty()) continue;
            // Retained ids imply the circuit parsed during prescreening.
            const CircuitModel model = CircuitModel::parse(circuit);
            std::vector<ApeTable> tables;
            for (const auto& [ls, rec] : kept)
                tables.push_back(ape(model, ls->true_params, rec->outcome.best_params));
            for (const MapeRow& row : mape(model, tables))
                rep.mape_rows.push_back({circuit, loss, row.component, row.value});
        }
    }
    return rep;
}

namespace {

ordered_json options_to_json(const BenchOptions& o) {
    ordered_json j;
    ordered_json losses = ordered_json::array();
    for (LossKind k : o.losses) losses.push_back(loss_token(k));
    j["losses"] = std::move(losses);
    j["paired"] = o.paired;
    j["method"] = o.method == GlobalMethod::Basinhop ? "basinhop" : "none";
    j["jobs"] = o.jobs;
    j["prescreen_threshold_pct"] = o.prescreen_threshold_pct;
    j["rng_seed"] = o.rng_seed;
    ordered_json fit;
    fit["chi2_threshold"] = o.fit.chi2_threshold;
    fit["r2_threshold"] = o.fit.r2_threshold;
    fit["max_restarts"] = o.fit.max_restarts;
    fit["max_evaluations_per_restart"] = o.fit.max_evaluations_per_restart;
    j["fit"] = std::move(fit);
    if (o.method == GlobalMethod::Basinhop) {
        ordered_json hops;
        hops["hop_count"] = o.hops.hop_count;
        hops["step_scale"] = o.hops.step_scale;
        hops["temperature"] = o.hops.temperature;
        j["hops"] = std::move(hops);
    }
    return j;
}

} // namespace

void write_report(const std::filesystem::path& dir, const BenchReport& report, bool strip_times) {
    std::filesystem::create_directories(dir);
    auto write = [&](const std::filesystem::path& name, const std::string& body) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + (dir / name).string() + " for writing");
        out << body;
        out.flush();
        if (!out) throw IoError("cannot write " + (dir / name).string());
    };

    std::string conv = "loss,count,rate\n";
    for (const ConvergenceRow& row : report.convergence)
        conv += std::string(loss_token(row.loss)) + "," + std::to_string(row.count) + "," +
                format_double(row.rate) + "\n";
    write("convergence.csv", conv);

    std::string summary = "loss,metric,mean,q25,q50,q75,lo_whisker,hi_whisker,outliers\n";
    for (const SummaryRow& row : report.summary) {
        if (strip_times && row.metric == "time_s") continue;
        summary += std::string(loss_token(row.loss)) + "," + row.metric + "," +
                   format_double(row.stats.mean) + "," + format_double(row.stats.q25) + "," +
                   format_double(row.stats.q50) + "," + format_double(row.stats.q75) + "," +
                   format_double(row.stats.lo_whisker) + "," + format_double(row.stats.hi_whisker) +
                   "," + std::to_string(row.stats.outliers) + "\n";
    }
    write("summary.csv", summary);

    std::string mape_csv = "circuit,loss,component,mape\n";
    for (const MapeCsvRow& row : report.mape_rows)
        mape_csv += csv_field(row.circuit) + "," + std::string(loss_token(row.loss)) + "," +
                    csv_field(row.component) + "," + format_double(row.value) + "\n";
    write("mape.csv", mape_csv);

    std::string radar = "loss,metric,value\n";
    for (const RadarRow& row : report.radar) {
        if (strip_times && row.metric == "time_s") continue;
        radar += std::string(loss_token(row.loss)) + "," + row.metric + "," +
                 format_double(row.value) + "\n";
    }
    write("radar.csv", radar);

    ordered_json j;
    j["dataset"] = {{"size", report.dataset_size}, {"manifest_hash", report.manifest_hash}};
    j["options"] = options_to_json(report.options);
    j["machine"] = {{"hardware_concurrency", std::thread::hardware_concurrency()}};
    ordered_json conv_json = ordered_json::array();
    for (const ConvergenceRow& row : report.convergence)
        conv_json.push_back(
            {{"loss", loss_token(row.loss)}, {"count", row.count}, {"rate", row.rate}});
    j["convergence"] = std::move(conv_json);
    ordered_json subset = ordered_json::array();
    for (LossKind k : report.mutual_subset) subset.push_back(loss_token(k));
    j["mutual_subset"] = std::move(subset);
    j["mutual_ids"] = report.mutual_ids;
    ordered_json retention = ordered_json::array();
    for (const RetentionRow& row : report.retention)
        retention.push_back({{"circuit", row.circuit},
                             {"loss", loss_token(row.loss)},
                             {"retained_fraction", row.retained_fraction}});
    j["retention"] = std::move(retention);
    ordered_json summary_json = ordered_json::array();
    for (const SummaryRow& row : report.summary) {
        if (strip_times && row.metric == "time_s") continue;
        summary_json.push_back({{"loss", loss_token(row.loss)},
                                {"metric", row.metric},
                                {"mean", row.stats.mean},
                                {"q25", row.stats.q25},
                                {"q50", row.stats.q50},
                                {"q75", row.stats.q75},
                                {"lo_whisker", row.stats.lo_whisker},
                                {"hi_whisker", row.stats.hi_whisker},
                                {"outliers", row.stats.outliers}});
    }
    j["summary"] = std::move(summary_json);
    ordered_json mape_json = ordered_json::array();
    for (const MapeCsvRow& row : report.mape_rows)
        mape_json.push_back({{"circuit", row.circuit},
                             {"loss", loss_token(row.loss)},
                             {"component", row.component},
                             {"mape", row.value}});
    j["mape"] = std::move(mape_json);
    ordered_json radar_json = ordered_json::array();
    for (const RadarRow& row : report.radar) {
        if (strip_times && row.metric == "time_s") continue;
        radar_json.push_back(
            {{"loss", loss_token(row.loss)}, {"metric", row.metric}, {"value", row.value}});
    }
    j["radar"] = std::move(radar_json);
    write("report.json", j.dump(2) + "\n");
}

} // namespace zfit
