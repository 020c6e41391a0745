// Command-line front end: solve, sweep, membership, plot, gen-data.

#include "drorl/drorl.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace drorl;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

ExperimentConfig config_from(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
    if (c.seed) cfg.master_seed = *c.seed;
    if (!c.out.empty()) cfg.output.directory = c.out;
    return cfg;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write '" + path.string() + "'");
    return os;
}

void add_common(CLI::App* app, Common& c, const char* out_help) {
    app->add_option("--config", c.config, "experiment config (JSON)");
    app->add_option("--seed", c.seed, "master seed override");
    app->add_option("--out", c.out, out_help);
}

int cmd_solve(const Common& c, std::size_t algo_index, std::optional<std::size_t> n) {
    const ExperimentConfig cfg = config_from(c);
    if (algo_index >= cfg.algorithms.size()) throw ValidationError("--algo index out of range");
    const AlgorithmSpec& algo = cfg.algorithms[algo_index];
    const std::size_t n_samples = n.value_or(cfg.data.N.front());
    const std::uint64_t seed = cfg.data.seeds.front();

    const Environment env = make_environment(cfg.env);
    const OfflineDataset ds = make_dataset(env, cfg, partial_behavior(env, cfg.data.state_marginal), n_samples,
                                           row_seed(cfg.master_seed, algo, n_samples, seed));
    const SolveReport rep = run_algorithm(algo, env.mdp, tally(ds, env.mdp.n_states(), env.mdp.n_actions()), cfg.solve);

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!c.out.empty()) {
        file = open_out(fs::path(c.out) / "report.txt");
        os = &file;
    }
    *os << "env " << env.name << '\n' << "N " << n_samples << '\n' << "dataset_size " << ds.size() << '\n';
    write_report(*os, rep);
    *os << "optimal_value ";
    detail::write_real(*os, env.optimal_value());
    *os << "\nsuboptimality ";
    detail::write_real(*os, suboptimality(env.mdp, rep.policy, env.v_star));
    *os << '\n';
    return 0;
}

int cmd_sweep(const Common& c, std::optional<std::size_t> workers) {
    const ExperimentConfig cfg = config_from(c);
    const SweepResult result = run_sweep(cfg, workers);
    const fs::path dir = cfg.output.directory;
    {
        auto os = open_out(dir / "results.csv");
        emit_csv(os, result.rows);
    }
    const auto series = summarize(result.rows);
    {
        auto os = open_out(dir / "summary.csv");
        emit_summary_csv(os, series);
    }
    if (!result.errors.empty()) {
        auto os = open_out(dir / "errors.txt");
        for (const auto& e : result.errors)
            os << e.algo << ' ' << e.N << ' ' << e.seed << ": " << e.message << '\n';
        std::cerr << result.errors.size() << " row(s) failed; see " << (dir / "errors.txt").string() << '\n';
    }
    if (cfg.output.plot) {
        auto os = open_out(dir / "results.svg");
        render_svg(os, series, std::string(to_string(cfg.data.coverage)) + " coverage");
    }
    std::cout << result.rows.size() << " rows written to " << (dir / "results.csv").string() << '\n';
    return result.errors.empty() ? 0 : 3;
}

int cmd_membership(const Common& c, const std::string& env_name, const std::string& kind_name, double constant,
                   std::size_t n_per_pair, double delta, std::size_t trials) {
    const std::uint64_t seed = c.seed.value_or(0);
    TabularMDP mdp;
    if (env_name.rfind("random:", 0) == 0) {
        mdp = build_random_mdp(std::stoul(env_name.substr(7)), 2, seed);
    } else {
        ExperimentConfig cfg = config_from(c);
        if (env_name != "config") cfg.env.map = env_name;
        mdp = make_environment(cfg.env).mdp;
    }
    const UncertaintyKind kind = make_kind(parse_divergence(kind_name), constant);
    const double freq = run_membership(mdp, kind, n_per_pair, delta, trials, seed);
    std::cout << "kind " << kind_name << "\nn_per_pair " << n_per_pair << "\ndelta " << delta << "\ntrials " << trials
              << "\nfrequency " << freq << '\n';
    return 0;
}

int cmd_plot(const std::string& csv, const std::string& out, const std::string& title) {
    std::ifstream in(csv);
    if (!in) throw Error("cannot open '" + csv + "'");
    const auto rows = parse_csv(in);
    auto os = open_out(out);
    render_svg(os, summarize(rows), title);
    return 0;
}

int cmd_gen_data(const Common& c, std::optional<std::size_t> n) {
    const ExperimentConfig cfg = config_from(c);
    const std::size_t n_samples = n.value_or(cfg.data.N.front());
    const Environment env = make_environment(cfg.env);
    const OfflineDataset ds = make_dataset(env, cfg, partial_behavior(env, cfg.data.state_marginal), n_samples,
                                           combine_seed(cfg.master_seed, n_samples));
    if (c.out.empty()) {
        write_dataset(std::cout, ds);
    } else {
        auto os = open_out(c.out);
        write_dataset(os, ds);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributionally robust offline RL toolkit"};
    app.require_subcommand(1);

    Common solve_c, sweep_c, mem_c, gen_c;
    std::size_t algo_index = 0;
    std::optional<std::size_t> solve_n, gen_n, workers;
    auto* solve = app.add_subcommand("solve", "run one algorithm on one dataset and print its report");
    add_common(solve, solve_c, "directory for report.txt (default: stdout)");
    solve->add_option("--algo", algo_index, "index into the config's algorithms list");
    solve->add_option("--N", solve_n, "dataset size (default: first N of the grid)");

    auto* sweep = app.add_subcommand("sweep", "run the full (algorithm, N, seed) grid to CSV");
    add_common(sweep, sweep_c, "output directory (overrides output.directory)");
    sweep->add_option("--workers", workers, "worker threads (overrides config)");

    std::string env_name = "random:5", kind_name = "tv";
    double constant = 1.0, delta = 0.2;
    std::size_t n_per_pair = 50, trials = 200;
    auto* mem = app.add_subcommand("membership", "frequency of the true kernel inside the data-driven set");
    add_common(mem, mem_c, "unused");
    mem->add_option("--env", env_name, "random:<n_states>, config, builtin:4x4 or a map file");
    mem->add_option("--kind", kind_name, "tv | wasserstein | kl | chi2");
    mem->add_option("--constant", constant, "radius constant");
    mem->add_option("--n-per-pair", n_per_pair, "samples per (s, a); 0 means no data");
    mem->add_option("--delta", delta, "confidence parameter");
    mem->add_option("--trials", trials, "number of trials (>= 50)");

    std::string csv, svg = "results.svg", title;
    auto* plot = app.add_subcommand("plot", "render a results CSV as SVG");
    plot->add_option("--csv", csv, "results CSV")->required();
    plot->add_option("--out", svg, "output SVG path");
    plot->add_option("--title", title, "plot title");

    auto* gen = app.add_subcommand("gen-data", "write one offline dataset as CSV");
    add_common(gen, gen_c, "output file (default: stdout)");
    gen->add_option("--N", gen_n, "dataset size (default: first N of the grid)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*solve) return cmd_solve(solve_c, algo_index, solve_n);
        if (*sweep) return cmd_sweep(sweep_c, workers);
        if (*mem) return cmd_membership(mem_c, env_name, kind_name, constant, n_per_pair, delta, trials);
        if (*plot) return cmd_plot(csv, svg, title);
        if (*gen) return cmd_gen_data(gen_c, gen_n);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
