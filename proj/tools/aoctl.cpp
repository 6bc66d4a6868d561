// aoctl: controller synthesis and cascaded AO loop simulation from a run config.
//
//   aoctl presets list
//   aoctl synth    --config run.json --out dir [--strategy S]...
//   aoctl synth    --problem problem.json --order 5 --out result.json
//   aoctl simulate --config run.json --out dir [--seed N] [--duration s] [--scheme standalone|dcao] [--strategy S]...
//   aoctl compare  name=traces/a/e2.csv name=traces/b/e2.csv [--out report.json]
//
// Exit status: 0 success, 1 invalid input, 2 synthesis infeasible, 3 simulation failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <aoctl/aoctl.hpp>

namespace {

using namespace aoctl;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> duration;
    std::optional<std::string> scheme;
    std::vector<std::string> strategies;
    std::optional<std::string> out;
};

// "s" applies to both stages, "s1/s2" per stage.
CaseSpec case_from_flag(const std::string& text) {
    CaseSpec c;
    const auto slash = text.find('/');
    c.stage1 = parse_strategy(slash == std::string::npos ? text : text.substr(0, slash));
    c.stage2 = parse_strategy(slash == std::string::npos ? text : text.substr(slash + 1));
    for (char ch : text) c.name += (ch == '/' || ch == ':') ? '_' : ch;
    return c;
}

RunConfig resolve(const std::string& path, const Overrides& o) {
    RunConfig c;
    {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        c = parse_config(ss.str(), path);
    }
    if (o.seed) c.simulation.seed = *o.seed;
    if (o.duration) c.simulation.duration_s = *o.duration;
    if (o.scheme) {
        if (*o.scheme != "standalone" && *o.scheme != "dcao") throw ConfigError("--scheme: expected standalone or dcao");
        c.scheme = *o.scheme == "dcao" ? Scheme::dcao : Scheme::standalone;
    }
    if (!o.strategies.empty()) {
        c.cases.clear();
        for (const auto& s : o.strategies) c.cases.push_back(case_from_flag(s));
    }
    if (o.out) c.output_dir = *o.out;
    validate_config(c);
    return c;
}

void write_failure(const std::string& dir, const std::string& status, const std::string& message) {
    std::filesystem::create_directories(dir);
    nlohmann::json j{{"status", status}, {"error", message}};
    std::ofstream(std::filesystem::path(dir) / "report.json") << j.dump(2) << '\n';
}

int run_config(const RunConfig& cfg, bool simulate) {
    try {
        const RunResult r = run_experiment(cfg, simulate);
        write_outputs(r, cfg.output_dir);
        std::cout << std::setprecision(6);
        for (const auto& c : r.report.at("cases")) {
            std::cout << c.at("name").get<std::string>() << ": stage1 " << c.at("stage1").get<std::string>()
                      << ", stage2 " << c.at("stage2").get<std::string>();
            if (simulate)
                std::cout << ", residual RMS " << c.at("total_rms_e2").get<double>() << " (tilt "
                          << c.at("tilt_rms_e2").get<double>() << ")";
            std::cout << '\n';
        }
        std::cout << "wrote " << cfg.output_dir << '\n';
        return 0;
    } catch (const SynthesisFailure& e) {
        write_failure(cfg.output_dir, "infeasible", e.what());
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const SimulationFailure& e) {
        write_failure(cfg.output_dir, "simulation-failure", e.what());
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

int synth_problem(const std::string& path, int order, const std::string& structure, const std::string& out) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open problem file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParameterError(path + ": " + e.what());
    }
    SynthesisProblem p = problem_from_json(j);
    if (order > 0) p.order = order;
    if (!structure.empty()) p.structure = structure == "integrator" ? ControllerStructure::integrator : ControllerStructure::free;
    const int max_iter = j.value("max_iter", 20);
    const double rel_tol = j.value("rel_tol", 1e-4);
    const double g0 = j.value("initial_gain", 0.1);
    const SynthesisResult r = synthesize_multistart(p, g0, max_iter, rel_tol);
    const nlohmann::json rj = to_json(r, p.grid().rate_hz());
    if (out.empty()) {
        std::cout << rj.dump(2) << '\n';
    } else {
        std::ofstream(out) << rj.dump(2) << '\n';
    }
    if (r.status == SynthesisStatus::infeasible) {
        std::cerr << "error: " << r.diagnostics << '\n';
        return 2;
    }
    return 0;
}

// Reads a trace CSV (sample, mode_0, mode_1, ...) into columns.
std::vector<std::vector<double>> read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open trace file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("sample", 0) != 0) throw ParameterError(path + ": missing trace header");
    const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    std::vector<std::vector<double>> out(cols);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        for (std::size_t c = 0; c < cols; ++c) {
            if (!std::getline(ss, cell, ',')) throw ParameterError(path + ":" + std::to_string(lineno) + ": missing column");
            out[c].push_back(std::stod(cell));
        }
    }
    return out;
}

int compare_traces(const std::vector<std::string>& items, double rate, const std::string& out) {
    std::vector<ComparedSignal> sig;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ParameterError("compare: expected name=path, got '" + item + "'");
        const auto cols = read_trace_csv(item.substr(eq + 1));
        if (cols.empty()) throw ParameterError("compare: no mode columns in " + item.substr(eq + 1));
        ComparedSignal s;
        s.name = item.substr(0, eq);
        s.residual = cols.front();
        s.rate_hz = rate;
        sig.push_back(std::move(s));
    }
    const nlohmann::json j = to_json(compare(sig));
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::ofstream(out) << j.dump(2) << '\n';
    }
    return 0;
}

void list_presets() {
    std::cout << std::left << std::setw(14) << "name" << std::setw(8) << "seeing" << std::setw(7) << "t0_ms"
              << std::setw(6) << "G" << std::setw(6) << "J" << std::setw(8) << "f1_hz" << std::setw(8) << "f2_hz"
              << std::setw(8) << "modes1" << std::setw(8) << "modes2" << std::setw(8) << "lam1_um"
              << "lam2_um\n";
    for (const auto& p : science_presets())
        std::cout << std::left << std::setw(14) << p.name << std::setw(8) << p.seeing_arcsec << std::setw(7) << p.t0_ms
                  << std::setw(6) << p.g_mag << std::setw(6) << p.j_mag << std::setw(8) << p.f1_hz << std::setw(8)
                  << p.f2_hz << std::setw(8) << p.n_modes1 << std::setw(8) << p.n_modes2 << std::setw(8)
                  << p.lambda1_um << p.lambda2_um << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven AO controller synthesis and cascaded loop simulation"};
    app.require_subcommand(1);

    auto* presets = app.add_subcommand("presets", "Science-case presets");
    presets->add_subcommand("list", "List the preset table");
    presets->require_subcommand(1);

    Overrides synth_o, sim_o;
    std::string config_synth, config_sim, problem, structure, synth_out;
    int order = 0;
    auto* synth = app.add_subcommand("synth", "Design controllers without simulating");
    auto* src = synth->add_option("--config", config_synth, "Run config (JSON)");
    synth->add_option("--problem", problem, "Single synthesis problem (JSON)")->excludes(src);
    synth->add_option("--order", order, "Controller order (with --problem)");
    synth->add_option("--structure", structure, "free or integrator (with --problem)")
        ->check(CLI::IsMember({"free", "integrator"}));
    synth->add_option("--out", synth_out, "Output directory (config) or result file (problem)");
    synth->add_option("--strategy", synth_o.strategies, "Strategy, 's' or 's1/s2'; repeatable");

    auto* sim = app.add_subcommand("simulate", "Design controllers and run the cascade");
    sim->add_option("--config", config_sim, "Run config (JSON)")->required();
    std::string out_sim;
    sim->add_option("--out", out_sim, "Output directory");
    std::uint64_t seed = 0;
    double duration = 0.0;
    std::string scheme;
    auto* seed_opt = sim->add_option("--seed", seed, "RNG seed");
    auto* dur_opt = sim->add_option("--duration", duration, "Simulated seconds");
    auto* scheme_opt = sim->add_option("--scheme", scheme, "standalone or dcao")->check(CLI::IsMember({"standalone", "dcao"}));
    sim->add_option("--strategy", sim_o.strategies, "Strategy, 's' or 's1/s2'; repeatable");

    auto* cmp = app.add_subcommand("compare", "Compare residual traces");
    std::vector<std::string> items;
    double rate = 1.0;
    std::string cmp_out;
    cmp->add_option("traces", items, "name=path/to/e2.csv, at least two")->required()->expected(2, -1);
    cmp->add_option("--rate", rate, "Sample rate of the traces (Hz)")->required();
    cmp->add_option("--out", cmp_out, "Report file (JSON)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (presets->parsed()) {
            list_presets();
            return 0;
        }
        if (synth->parsed()) {
            if (!problem.empty()) return synth_problem(problem, order, structure, synth_out);
            if (config_synth.empty()) throw ConfigError("synth: --config or --problem required");
            if (!synth_out.empty()) synth_o.out = synth_out;
            return run_config(resolve(config_synth, synth_o), false);
        }
        if (sim->parsed()) {
            if (*seed_opt) sim_o.seed = seed;
            if (*dur_opt) sim_o.duration = duration;
            if (*scheme_opt) sim_o.scheme = scheme;
            if (!out_sim.empty()) sim_o.out = out_sim;
            return run_config(resolve(config_sim, sim_o), true);
        }
        if (cmp->parsed()) return compare_traces(items, rate, cmp_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
