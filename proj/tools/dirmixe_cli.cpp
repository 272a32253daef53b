#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dirmixe/error.hpp"
#include "dirmixe/experiment.hpp"

namespace {

using dirmixe::ConfigError;
using Overrides = std::vector<std::pair<std::string, std::string>>;

// Leftover "--a.b value" / "--a.b=value" tokens become dotted config overrides.
Overrides dotted_overrides(const std::vector<std::string>& rest) {
    Overrides out;
    for (std::size_t i = 0; i < rest.size(); ++i) {
        const std::string& tok = rest[i];
        if (tok.rfind("--", 0) != 0 || tok.find('.') == std::string::npos)
            throw ConfigError("unrecognized argument: " + tok);
        const auto eq = tok.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(tok.substr(2, eq - 2), tok.substr(eq + 1));
        } else {
            if (i + 1 >= rest.size()) throw ConfigError("missing value for " + tok);
            out.emplace_back(tok.substr(2), rest[++i]);
        }
    }
    return out;
}

struct Common {
    std::string config;
    std::string output_dir;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON experiment config");
    sub->add_option("--output-dir", c.output_dir, "Overrides output_dir");
    sub->allow_extras();
}

dirmixe::ExperimentConfig resolve(const Common& c, CLI::App* sub, Overrides extra = {}) {
    auto overrides = dotted_overrides(sub->remaining());
    if (!c.output_dir.empty()) overrides.emplace_back("output_dir", nlohmann::json(c.output_dir).dump());
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    std::optional<std::filesystem::path> file;
    if (!c.config.empty()) file = c.config;
    return dirmixe::load_config(file, overrides);
}

int run(int argc, char** argv) {
    CLI::App app{"DirMixE: Dirichlet-mixture expert training for test-agnostic long-tail recognition"};
    app.require_subcommand(1);

    Common gen_c, train_c, eval_c, report_c;
    auto* gen = app.add_subcommand("gen-data", "Generate the training set and the test suite");
    add_common(gen, gen_c);

    auto* tr = app.add_subcommand("train", "Train the mixture of experts");
    add_common(tr, train_c);
    std::optional<double> lambda;
    bool train_single = false;
    tr->add_option("--lambda", lambda, "Semi-variance weight (train.lambda)");
    tr->add_flag("--single-expert-la", train_single, "Train the single-expert logit-adjusted baseline instead");

    auto* ev = app.add_subcommand("eval", "Test-time aggregation and evaluation");
    add_common(ev, eval_c);
    std::string checkpoint;
    bool eval_single = false;
    ev->add_option("--checkpoint", checkpoint, "Checkpoint manifest (default: under output_dir)");
    ev->add_flag("--single-expert-la", eval_single, "Evaluate the single-expert baseline checkpoint");

    auto* th = app.add_subcommand("theory-rho", "Monte Carlo checks of the semi-variance ratio");
    dirmixe::TheoryRequest req;
    std::string rates = "1", alpha_grid = "0.2:1.0:0.1", thetas = "3,5,10";
    th->add_flag("--exponential", req.exponential);
    th->add_option("--rate", rates, "Exponential rates, grid syntax");
    th->add_flag("--gamma", req.gamma);
    th->add_option("--alpha-grid", alpha_grid, "Gamma shapes, start:stop:step or a,b,c");
    th->add_option("--beta", req.beta, "Gamma rate");
    th->add_flag("--pareto", req.pareto);
    th->add_option("--theta", thetas, "Pareto tail indices");
    th->add_option("--scale", req.pareto_scale, "Pareto minimum value");
    th->add_option("--mixtures", req.mixtures, "Random two-component Gamma mixtures to check");
    th->add_option("--samples", req.samples, "Monte Carlo samples per row");
    th->add_option("--seed", req.seed);
    std::string theory_out = "dirmixe_out";
    th->add_option("--output-dir", theory_out);

    auto* rep = app.add_subcommand("report", "Concatenate result CSVs into results/summary.csv");
    add_common(rep, report_c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (gen->parsed()) {
        dirmixe::cmd_gen_data(resolve(gen_c, gen));
    } else if (tr->parsed()) {
        Overrides extra;
        if (lambda) extra.emplace_back("train.lambda", nlohmann::json(*lambda).dump());
        const auto state = dirmixe::cmd_train(resolve(train_c, tr, extra), train_single);
        if (!state.history.empty()) {
            const auto& last = state.history.back();
            std::printf("epochs=%d objective=%.6g mean=%.6g semivar=%.6g\n", last.epoch + 1, last.objective,
                        last.mean, last.semivar);
        }
    } else if (ev->parsed()) {
        std::optional<std::filesystem::path> ck;
        if (!checkpoint.empty()) ck = checkpoint;
        const auto out = dirmixe::cmd_eval(resolve(eval_c, ev), eval_single, ck);
        std::printf("mean_accuracy=%.6g std=%.6g\n", out.table.mean_accuracy, out.table.std_accuracy);
    } else if (th->parsed()) {
        if (!req.exponential && !req.gamma && !req.pareto && req.mixtures == 0)
            throw ConfigError("choose at least one of --exponential, --gamma, --pareto, --mixtures");
        req.rates = dirmixe::parse_grid(rates);
        req.alphas = dirmixe::parse_grid(alpha_grid);
        req.thetas = dirmixe::parse_grid(thetas);
        req.output_dir = theory_out;
        for (const auto& r : dirmixe::cmd_theory(req))
            std::printf("%s %s rho_mc=%s ci=%s bound=%s holds=%s\n", r.kind.c_str(), r.params.c_str(),
                        r.rho_mc ? dirmixe::format_number(*r.rho_mc).c_str() : "undefined",
                        dirmixe::format_number(r.ci).c_str(), dirmixe::format_number(r.rho_bound).c_str(),
                        r.holds ? (*r.holds ? "true" : "false") : "n/a");
    } else if (rep->parsed()) {
        dirmixe::cmd_report(resolve(report_c, rep));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const dirmixe::NumericalAbort& e) {
        std::fprintf(stderr, "numerical abort: %s (lr=%g, pair=%zu)\n", e.what(), e.last_lr(), e.pair_index());
        return 2;
    } catch (const dirmixe::MissingArtifact& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
