#include <CLI11.hpp>

#include "mlnn/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Multi-level neural-network surrogates for parametric PDEs"};
    app.require_subcommand(1);

    std::string config, out = "out", log_level = "info";
    std::uint64_t seed = 0;
    unsigned jobs = 0;
    bool seed_set = false, jobs_set = false;

    auto add_common = [&](CLI::App* cmd, bool with_config) {
        if (with_config) cmd->add_option("--config", config, "JSON run config")->required();
        cmd->add_option("--out", out, "output directory");
        cmd->add_option("--seed", seed, "override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
        cmd->add_option("--jobs", jobs, "max concurrent solver/training tasks")
            ->each([&](const std::string&) { jobs_set = true; });
        cmd->add_option("--log-level", log_level, "quiet|info")
            ->check(CLI::IsMember({"quiet", "info"}));
    };

    auto* run_mlnn = app.add_subcommand("run-mlnn", "build an MLNN surrogate");
    add_common(run_mlnn, true);
    auto* run_mlsc = app.add_subcommand("run-mlsc", "build the MLSC baseline");
    add_common(run_mlsc, true);

    std::string mlnn_report, mlsc_report;
    auto* compare = app.add_subcommand("compare", "merge MLNN and MLSC reports into a cost table");
    compare->add_option("--mlnn", mlnn_report, "MLNN report.json")->required();
    compare->add_option("--mlsc", mlsc_report, "MLSC report.json")->required();
    compare->add_option("--out", out, "output directory");

    std::string problem = "advection-diffusion";
    double re = 10.0;
    std::vector<std::size_t> n_list;
    std::size_t n1 = 100, levels = 3;
    auto* convergence = app.add_subcommand("convergence", "error-vs-N table");
    convergence->add_option("--problem", problem, "advection-diffusion|burgers");
    convergence->add_option("--re", re, "Reynolds number (z)");
    convergence->add_option("--n", n_list, "interval counts")->required()->delimiter(',');
    convergence->add_option("--out", out, "output directory");

    auto* theorem1 = app.add_subcommand("theorem1", "similarity-defect table rho(h)");
    theorem1->add_option("--problem", problem, "advection-diffusion|burgers");
    theorem1->add_option("--re", re, "Reynolds number (z)");
    theorem1->add_option("--n1", n1, "coarsest interval count of the first row");
    theorem1->add_option("--levels", levels, "number of rows (n1 doubles per row)");
    theorem1->add_option("--out", out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mlnn::cli::exit_config;
    }

    mlnn::cli::CommonOptions opts;
    if (seed_set) opts.seed = seed;
    if (jobs_set) opts.jobs = jobs;
    opts.log_level = log_level;

    try {
        if (run_mlnn->parsed()) return mlnn::cli::cmd_run_mlnn(config, out, opts);
        if (run_mlsc->parsed()) return mlnn::cli::cmd_run_mlsc(config, out, opts);
        if (compare->parsed()) return mlnn::cli::cmd_compare(mlnn_report, mlsc_report, out);
        if (convergence->parsed()) return mlnn::cli::cmd_convergence(problem, re, n_list, out);
        if (theorem1->parsed()) return mlnn::cli::cmd_theorem1(problem, re, n1, levels, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mlnn::cli::exit_runtime;
    }
    return mlnn::cli::exit_config;
}
