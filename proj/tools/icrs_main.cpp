// icrs: offline evaluation harness for immersive conversational
// recommendation. Subcommands: ingest, adapt, run, report, replay-verify.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icrs/error.hpp"
#include "icrs/pipeline.hpp"

namespace {

struct Overrides {
    std::vector<std::string> scenarios;
    std::vector<std::string> methods;
    std::string form;
    std::string modality;
    std::string objective;
    std::string prefix_mode;
    double lambda = -1.0;
    std::int64_t seed = -1;
    int jobs = 0;
    bool mock = false;
    std::string replay;
    std::string resume;
    std::string output;
    std::string templates;
};

void add_override_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--scenario", o.scenarios, "restrict to these scenarios");
    cmd->add_option("--method", o.methods,
                    "method spec family[:form][:modality][:variant]; replaces the "
                    "configured list");
    cmd->add_option("--form", o.form, "form for model methods (pointwise|listwise)");
    cmd->add_option("--modality", o.modality, "modality for model methods (T|V|V_T)");
    cmd->add_option("--objective", o.objective, "restrict model objective (EIS|IN)");
    cmd->add_option("--prefix-mode", o.prefix_mode,
                    "conversation prefix mode (pre|full-masked)");
    cmd->add_option("--lambda", o.lambda, "fusion weight in [0,1]");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--jobs", o.jobs, "parallelism limit");
    cmd->add_flag("--mock", o.mock, "use the deterministic mock clients");
    cmd->add_option("--replay", o.replay, "serve client responses from this run log");
    cmd->add_option("--resume", o.resume, "reuse keyed results from this run log");
    cmd->add_option("--output", o.output, "output directory");
    cmd->add_option("--templates", o.templates, "prompt template directory");
}

icrs::cli::RunConfig apply_overrides(const std::string& config_path,
                                     const Overrides& o) {
    icrs::cli::RunConfig c = icrs::cli::load_run_config(config_path);
    if (!o.scenarios.empty()) c.scenario_filter = o.scenarios;
    if (!o.methods.empty()) {
        c.methods.clear();
        for (const auto& m : o.methods)
            c.methods.push_back(icrs::cli::MethodSpec::parse(m));
    }
    if (!o.form.empty() || !o.modality.empty()) {
        for (auto& m : c.methods) {
            if (!m.is_model()) continue;
            if (!o.form.empty()) m.form = icrs::model::form_from_string(o.form);
            if (!o.modality.empty())
                m.modality = icrs::model::modality_from_string(o.modality);
        }
    }
    if (!o.objective.empty())
        c.objectives = {icrs::model::objective_from_string(o.objective)};
    if (!o.prefix_mode.empty()) {
        if (o.prefix_mode == "pre")
            c.prefix_mode = icrs::corpus::PrefixMode::pre_recommendation;
        else if (o.prefix_mode == "full-masked")
            c.prefix_mode = icrs::corpus::PrefixMode::full_masked;
        else
            throw icrs::domain_error("malformed config",
                                     "--prefix-mode must be pre or full-masked");
    }
    if (o.lambda >= 0.0) {
        if (o.lambda > 1.0)
            throw icrs::domain_error("malformed config", "--lambda outside [0,1]");
        c.lambda = o.lambda;
    }
    if (o.seed >= 0) {
        c.seed = static_cast<std::uint64_t>(o.seed);
        c.eval.seed = c.seed;
    }
    if (o.jobs > 0) c.jobs = o.jobs;
    if (o.mock) {
        c.model_client = "mock";
        c.judge_client = "mock";
    }
    if (!o.replay.empty()) {
        c.model_client = "replay";
        c.judge_client = "replay";
        c.replay_log = o.replay;
    }
    if (!o.resume.empty()) c.resume_log = o.resume;
    if (!o.output.empty()) c.output_dir = o.output;
    if (!o.templates.empty()) c.templates_dir = o.templates;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline evaluation harness for immersive conversational "
                 "recommendation"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "load and validate datasets");
    std::vector<std::string> ingest_manifests;
    std::string ingest_config;
    ingest->add_option("manifests", ingest_manifests, "dataset manifest paths");
    ingest->add_option("--config", ingest_config, "run config naming the datasets");

    // adapt / run / report share the config + override surface
    std::string config_path;
    Overrides o;
    auto* adapt = app.add_subcommand("adapt", "build evaluation instances");
    auto* run = app.add_subcommand("run", "run configured methods");
    auto* report = app.add_subcommand("report", "compute the metric grid");
    auto* verify = app.add_subcommand("replay-verify",
                                      "re-run from a log and compare bytes");
    std::string verify_log;
    for (CLI::App* cmd : {adapt, run, report, verify}) {
        cmd->add_option("--config", config_path, "run config file")->required();
        add_override_options(cmd, o);
    }
    verify->add_option("log", verify_log, "run log to verify against")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) {
            std::vector<std::string> manifests = ingest_manifests;
            if (!ingest_config.empty()) {
                auto c = icrs::cli::load_run_config(ingest_config);
                manifests.insert(manifests.end(), c.dataset_manifests.begin(),
                                 c.dataset_manifests.end());
            }
            return icrs::cli::cmd_ingest(manifests, std::cout);
        }
        icrs::cli::RunConfig config = apply_overrides(config_path, o);
        if (adapt->parsed()) return icrs::cli::cmd_adapt(config, std::cout);
        if (run->parsed()) return icrs::cli::cmd_run(config, std::cout);
        if (report->parsed()) return icrs::cli::cmd_report(config, std::cout);
        if (verify->parsed())
            return icrs::cli::cmd_replay_verify(config, verify_log, std::cout);
    } catch (const icrs::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == icrs::ErrorKind::io ? icrs::cli::exit_io
                                               : icrs::cli::exit_domain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return icrs::cli::exit_io;
    }
    return icrs::cli::exit_ok;
}
