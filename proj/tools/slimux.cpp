/*  Copyright 2026 the slimux authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.  */

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "slimux/pipeline.hpp"
#include "slimux/render.hpp"
#include "slimux/synth.hpp"

using namespace slimux;

namespace {

std::pair<double, double> parse_range(const std::string& text, const char* what) {
    const auto colon = text.find(':');
    double lo = 0.0, hi = 0.0;
    if (colon == std::string::npos || !parse_double(text.substr(0, colon), lo) ||
        !parse_double(text.substr(colon + 1), hi))
        throw CLI::ValidationError(msg(what, " must look like lo:hi, got '", text, "'"));
    return {lo, hi};
}

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> values;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        double v = 0.0;
        if (!parse_double(tok, v)) throw CLI::ValidationError(msg(what, ": cannot parse '", tok, "'"));
        values.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (values.empty()) throw CLI::ValidationError(msg(what, " must not be empty"));
    return values;
}

// "H2S@294.8=0.25,O2@293=0.35,SO2@293=0.15"
std::vector<std::tuple<std::string, double, double>> parse_truth(const std::string& text) {
    std::vector<std::tuple<std::string, double, double>> parts;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = text.substr(pos, comma - pos);
        const auto at = item.find('@');
        const auto eq = item.find('=', at == std::string::npos ? 0 : at);
        double temp = 0.0, value = 0.0;
        if (at == std::string::npos || eq == std::string::npos ||
            !parse_double(item.substr(at + 1, eq - at - 1), temp) || !parse_double(item.substr(eq + 1), value))
            throw CLI::ValidationError(msg("--truth items must look like SPECIES@TEMP=VALUE, got '", item, "'"));
        parts.emplace_back(item.substr(0, at), temp, value);
        pos = comma + 1;
    }
    if (parts.empty()) throw CLI::ValidationError("--truth must list at least one component");
    return parts;
}

void echo_configuration(const CLI::App& app) {
    std::cout << "## effective configuration\n";
    for (const CLI::App* sub : app.get_subcommands())
        std::cout << "[" << sub->get_name() << "]\n" << sub->config_to_str(true, false);
    std::cout << "##\n";
}

struct SolverFlags {
    double q = 1.0;
    bool q_set = false;
    std::string q_grid = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
    double delta = 1e-4;
    int max_iter = 500;
    double support_epsilon = 1e-3;

    void attach(CLI::App* cmd) {
        auto* qopt = cmd->add_option(
            "--q", q, "fixed sparsity exponent in (0,1]; without it q is selected by BIC over --q-grid");
        qopt->check(CLI::Range(1e-9, 1.0));
        cmd->callback([this, qopt] { q_set = qopt->count() > 0; });
        cmd->add_option("--q-grid", q_grid, "comma-separated q grid for BIC selection")->capture_default_str();
        cmd->add_option("--delta", delta, "relative-change convergence threshold")->capture_default_str();
        cmd->add_option("--max-iter", max_iter, "iteration cap per solve")->capture_default_str();
        cmd->add_option("--support-epsilon", support_epsilon,
                        "entries below this fraction of max(alpha) count as zero")
            ->capture_default_str();
    }

    SlimConfig to_config() const {
        SlimConfig cfg;
        cfg.q = q;
        cfg.delta = delta;
        cfg.max_iter = max_iter;
        cfg.support_epsilon = support_epsilon;
        cfg.q_grid = parse_list(q_grid, "--q-grid");
        cfg.validate();
        return cfg;
    }
};

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    std::vector<double> out(static_cast<std::size_t>(v.size()));
    Eigen::VectorXd::Map(out.data(), v.size()) = v;
    return nlohmann::json(out);
}

int run_build_library(const std::string& manifest, const std::string& out) {
    const LibraryMatrix lib = build_library(manifest);
    write_library_archive(lib, out);
    std::cout << "library: " << lib.endmember_count() << " endmembers x " << lib.band_count()
              << " bands, grid " << format_double(lib.grid.values.front()) << "-"
              << format_double(lib.grid.values.back()) << " nm\n";
    std::cout << "detrend: " << (lib.detrend.enabled ? msg("window ", lib.detrend.window, ", order ",
                                                           lib.detrend.order)
                                                     : std::string("disabled"))
              << "\n";
    std::cout << "manifest hash: " << lib.source_hash << "\n";
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse trace-gas retrieval from hyperspectral spectra"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a config file (flags override file values)");

    // ---- build-library ----------------------------------------------------
    auto* build = app.add_subcommand("build-library", "assemble a library archive from a manifest");
    std::string build_manifest, build_out;
    build->add_option("manifest", build_manifest, "library manifest (JSON)")->required();
    build->add_option("-o,--out", build_out, "output library archive path")->required();

    // ---- simulate ----------------------------------------------------------
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic pixel or scene");
    bool sim_scene = false;
    std::string sim_library, sim_truth, sim_out, sim_convention, sim_band = "312:326";
    double sim_snr = 60.0, sim_peak_du = 29.74, sim_o3_du = 297.4;
    std::uint64_t sim_seed = 1;
    int sim_rows = 47, sim_cols = 41, sim_bands = 497;
    simulate->add_flag("--scene", sim_scene, "generate a gridded plume scene instead of a single pixel");
    simulate->add_option("--library", sim_library, "library archive (single-pixel mode)");
    simulate->add_option("--truth", sim_truth, "components, e.g. H2S@294.8=0.25,O2@293=0.35");
    simulate->add_option("--snr-db", sim_snr, "target SNR in dB (inf for noiseless)")->capture_default_str();
    simulate->add_option("--seed", sim_seed, "base random seed")->capture_default_str();
    simulate->add_option("--snr-convention", sim_convention,
                         "norm-over-variance | energy-per-sample (default: norm-over-variance for pixels, "
                         "energy-per-sample for scenes)");
    simulate->add_option("--out", sim_out, "output file (pixel) or directory (scene)")->required();
    simulate->add_option("--rows", sim_rows, "scene scanlines")->capture_default_str();
    simulate->add_option("--cols", sim_cols, "scene ground pixels")->capture_default_str();
    simulate->add_option("--bands", sim_bands, "scene spectral samples")->capture_default_str();
    simulate->add_option("--peak-du", sim_peak_du, "plume peak column in Dobson units")->capture_default_str();
    std::string sim_plume_species = "SO2";
    double sim_plume_temp = 293.0;
    simulate->add_option("--plume-species", sim_plume_species, "planted plume species")->capture_default_str();
    simulate->add_option("--plume-temperature", sim_plume_temp, "planted plume endmember temperature (K)")
        ->capture_default_str();
    simulate->add_option("--o3-du", sim_o3_du, "uniform ozone background in Dobson units (0 disables)")
        ->capture_default_str();
    simulate->add_option("--band", sim_band, "band written into the scene's library manifest (lo:hi nm)")
        ->capture_default_str();

    // ---- mc ----------------------------------------------------------------
    auto* mc = app.add_subcommand("mc", "Monte-Carlo benchmark over an SNR sweep");
    SolverFlags mc_solver;
    std::string mc_library, mc_truth, mc_out, mc_snr = "20,40,60", mc_convention = "norm-over-variance";
    int mc_trials = 1000;
    std::uint64_t mc_seed = 1;
    mc->add_option("--library", mc_library, "library archive (default: built-in 10x29 benchmark library)");
    mc->add_option("--truth", mc_truth, "components (default: built-in benchmark truth)");
    mc->add_option("--trials", mc_trials, "Monte-Carlo trials per SNR")->capture_default_str();
    mc->add_option("--snr-db", mc_snr, "comma-separated SNR list in dB")->capture_default_str();
    mc->add_option("--seed", mc_seed, "base random seed")->capture_default_str();
    mc->add_option("--snr-convention", mc_convention, "norm-over-variance | energy-per-sample")
        ->capture_default_str();
    mc->add_option("--out", mc_out, "report file")->required();
    mc_solver.attach(mc);

    // ---- retrieve ----------------------------------------------------------
    auto* retrieve = app.add_subcommand("retrieve", "retrieve per-species column maps from a scene");
    SolverFlags ret_solver;
    std::string ret_scene, ret_library, ret_out, ret_band;
    bool ret_per_pixel_q = false, ret_csv = false;
    int ret_workers = 1;
    double ret_noise_variance = 0.0;
    retrieve->add_option("scene", ret_scene, "scene manifest (JSON)")->required();
    retrieve->add_option("library", ret_library, "library archive (JSON)")->required();
    retrieve->add_option("--band", ret_band, "clip scene to lo:hi nm before retrieval");
    retrieve->add_flag("--per-pixel-q", ret_per_pixel_q, "run BIC selection on every pixel (slow path)");
    retrieve->add_option("--workers", ret_workers, "worker threads (1 reproduces any parallel result)")
        ->capture_default_str();
    auto* noise_opt = retrieve->add_option("--noise-variance", ret_noise_variance,
                                           "fixed scaled-identity noise variance (default: per-pixel estimate)");
    retrieve->add_flag("--csv", ret_csv, "also write CSV alongside each map");
    retrieve->add_option("--out", ret_out, "output directory")->required();
    ret_solver.attach(retrieve);

    // ---- compare -----------------------------------------------------------
    auto* compare = app.add_subcommand("compare", "RMSE/bias report between two maps");
    std::string cmp_candidate, cmp_reference, cmp_out;
    compare->add_option("candidate", cmp_candidate, "candidate map manifest")->required();
    compare->add_option("reference", cmp_reference, "reference map manifest")->required();
    compare->add_option("--out", cmp_out, "also write the report to this file");

    // ---- render ------------------------------------------------------------
    auto* render = app.add_subcommand("render", "render a map as a PGM heatmap");
    std::string render_map, render_out, render_scale;
    render->add_option("map", render_map, "map manifest")->required();
    render->add_option("image", render_out, "output image path (.pgm)")->required();
    render->add_option("--scale", render_scale, "fixed color scale lo:hi (default: auto)");

    CLI11_PARSE(app, argc, argv);

    try {
        echo_configuration(app);

        if (build->parsed()) return run_build_library(build_manifest, build_out);

        if (simulate->parsed()) {
            if (sim_scene) {
                PlumeSceneOptions opt;
                opt.rows = sim_rows;
                opt.cols = sim_cols;
                opt.bands = sim_bands;
                opt.seed = sim_seed;
                opt.snr_db = sim_snr;
                opt.plume_species = sim_plume_species;
                opt.plume_temperature_k = sim_plume_temp;
                opt.plume_peak_molec_cm2 = sim_peak_du * kMoleculesPerDobsonUnit;
                opt.o3_background_molec_cm2 = sim_o3_du * kMoleculesPerDobsonUnit;
                opt.snr_convention = sim_convention.empty() ? SnrConvention::EnergyPerSample
                                                            : snr_convention_from_string(sim_convention);
                std::filesystem::create_directories(sim_out);
                std::filesystem::create_directories(join_path(sim_out, "atlas"));
                const PlumeScene scene = make_plume_scene(opt);
                write_scene(scene.scene, join_path(sim_out, "scene.json"));
                write_map(scene.truth_map, join_path(sim_out, msg("truth_", opt.plume_species, ".json")));
                const auto [lo, hi] = parse_range(sim_band, "--band");
                const SceneCube clipped = clip_band(scene.scene, lo, hi);
                const std::string manifest = write_atlas_with_manifest(
                    scene.records, join_path(sim_out, "atlas"), clipped.grid,
                    default_detrend_config(static_cast<int>(clipped.band_count())));
                std::cout << "scene: " << opt.rows << "x" << opt.cols << " pixels, " << opt.bands
                          << " bands, plume peak " << format_double(sim_peak_du) << " DU, SNR "
                          << format_double(sim_snr) << " dB ("
                          << to_string(opt.snr_convention) << ")\n";
                std::cout << "wrote " << join_path(sim_out, "scene.json") << "\n";
                std::cout << "wrote " << join_path(sim_out, msg("truth_", opt.plume_species, ".json")) << "\n";
                std::cout << "wrote " << manifest << " (grid clipped to " << format_double(lo) << "-"
                          << format_double(hi) << " nm)\n";
                return 0;
            }
            if (sim_library.empty() || sim_truth.empty())
                throw std::runtime_error("single-pixel simulate needs --library and --truth");
            const LibraryMatrix lib = load_library_archive(sim_library);
            const SyntheticTruth truth = make_truth(lib, parse_truth(sim_truth), sim_seed);
            const SnrConvention conv = sim_convention.empty() ? SnrConvention::NormOverVariance
                                                              : snr_convention_from_string(sim_convention);
            const Eigen::VectorXd clean = generate_clean(lib, truth);
            const NoisyObservation obs = add_noise(clean, sim_snr, sim_seed, conv);
            nlohmann::json j;
            j["format"] = "slimux-pixel-v1";
            j["seed"] = sim_seed;
            j["snr_db"] = sim_snr;
            j["snr_convention"] = to_string(conv);
            j["sigma_sq"] = obs.sigma_sq;
            j["truth"] = vector_to_json(truth.alpha_true);
            j["clean"] = vector_to_json(clean);
            j["noisy"] = vector_to_json(obs.noisy);
            auto& labels = j["labels"];
            labels = nlohmann::json::array();
            for (const auto& l : lib.labels)
                labels.push_back({{"species", l.species}, {"temperature_k", l.temperature_k}});
            std::ofstream out(sim_out);
            if (!out) throw std::runtime_error(msg("cannot open '", sim_out, "' for writing"));
            out << j.dump(2) << "\n";
            std::cout << "wrote " << sim_out << " (sigma_sq " << format_double(obs.sigma_sq) << ")\n";
            return 0;
        }

        if (mc->parsed()) {
            LibraryMatrix lib;
            SyntheticTruth truth;
            if (mc_library.empty() != mc_truth.empty())
                throw std::runtime_error("--library and --truth must be given together");
            if (mc_library.empty()) {
                const BenchmarkSetup setup = make_benchmark_setup(mc_seed);
                lib = setup.library;
                truth = setup.truth;
                std::cout << "using the built-in 10x29 benchmark library and truth\n";
            } else {
                lib = load_library_archive(mc_library);
                truth = make_truth(lib, parse_truth(mc_truth), mc_seed);
            }
            truth.seed = mc_seed;
            const SlimConfig cfg = mc_solver.to_config();
            const SnrConvention conv = snr_convention_from_string(mc_convention);
            const bool use_bic = !mc_solver.q_set;
            std::vector<McSummary> summaries;
            for (const double snr : parse_list(mc_snr, "--snr-db")) {
                summaries.push_back(
                    run_monte_carlo(lib.columns, truth, snr, mc_trials, cfg, use_bic, conv));
                std::cout << "snr " << format_double(snr) << " dB: mean SRE "
                          << format_double(summaries.back().mean_sre_db) << " dB\n";
            }
            write_mc_report(mc_out, summaries, truth, cfg, lib.labels);
            std::cout << "wrote " << mc_out << "\n";
            return 0;
        }

        if (retrieve->parsed()) {
            SceneCube scene = load_scene(ret_scene);
            if (!ret_band.empty()) {
                const auto [lo, hi] = parse_range(ret_band, "--band");
                scene = clip_band(scene, lo, hi);
            }
            const LibraryMatrix lib = load_library_archive(ret_library);
            RetrieveConfig cfg;
            cfg.slim = ret_solver.to_config();
            cfg.use_bic = !ret_solver.q_set;
            cfg.per_pixel_q = ret_per_pixel_q;
            cfg.workers = ret_workers;
            if (noise_opt->count() > 0) cfg.noise_variance = ret_noise_variance;

            const RetrievalReport report = retrieve_map(scene, lib, cfg);
            std::filesystem::create_directories(ret_out);

            std::size_t ok = 0, not_conv = 0, failed = 0;
            for (const auto s : report.status) {
                if (s == PixelStatus::Ok) ++ok;
                if (s == PixelStatus::NotConverged) ++not_conv;
                if (s == PixelStatus::Failed) ++failed;
            }
            nlohmann::json summary;
            summary["format"] = "slimux-retrieval-report-v1";
            summary["rows"] = report.rows;
            summary["cols"] = report.cols;
            summary["pixels_retrieved"] = report.retrieved_count();
            summary["pixels_ok"] = ok;
            summary["pixels_not_converged"] = not_conv;
            summary["pixels_failed"] = failed;
            summary["seconds"] = report.seconds;
            summary["metadata"] = report.metadata;
            auto& errors = summary["pixel_errors"];
            errors = nlohmann::json::array();
            for (std::size_t pix = 0; pix < report.pixel_count(); ++pix)
                if (!report.errors[pix].empty())
                    errors.push_back({{"pixel", pix}, {"error", report.errors[pix]}});

            for (const auto& species : species_in(report)) {
                const ConcentrationMap map = species_totals(report, species);
                const std::string path = join_path(ret_out, species + ".json");
                write_map(map, path, ret_csv);
                std::cout << "wrote " << path << "\n";
            }
            std::ofstream rep_out(join_path(ret_out, "report.json"));
            rep_out << summary.dump(2) << "\n";
            std::cout << "wrote " << join_path(ret_out, "report.json") << "\n";
            std::cout << "retrieved " << report.retrieved_count() << " pixels (" << not_conv
                      << " not converged, " << failed << " failed) in " << format_double(report.seconds)
                      << " s";
            if (!cfg.per_pixel_q) std::cout << ", q = " << format_double(report.global_q);
            std::cout << "\n";
            return 0;
        }

        if (compare->parsed()) {
            const ConcentrationMap candidate = load_map(cmp_candidate);
            const ConcentrationMap reference = load_map(cmp_reference);
            const MapComparison cmp = compare_maps(candidate, reference);
            std::ostringstream text;
            text << "candidate = " << cmp_candidate << "\n";
            text << "reference = " << cmp_reference << "\n";
            text << "valid_pixels = " << cmp.valid_pixels << "\n";
            text << "rmse_molecules_cm2 = " << format_double(cmp.rmse_molec) << "\n";
            text << "rmse_du = " << format_double(cmp.rmse_du) << "\n";
            text << "bias_molecules_cm2 = " << format_double(cmp.bias_molec) << "\n";
            text << "bias_du = " << format_double(cmp.bias_du) << "\n";
            std::cout << text.str();
            if (!cmp_out.empty()) {
                std::ofstream out(cmp_out);
                if (!out) throw std::runtime_error(msg("cannot open '", cmp_out, "' for writing"));
                out << text.str();
                std::cout << "wrote " << cmp_out << "\n";
            }
            return 0;
        }

        if (render->parsed()) {
            const ConcentrationMap map = load_map(render_map);
            std::optional<std::pair<double, double>> scale;
            if (!render_scale.empty()) scale = parse_range(render_scale, "--scale");
            render_heatmap(map, render_out, scale);
            std::cout << "wrote " << render_out << " and " << render_out << ".scale.txt\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
