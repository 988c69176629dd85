#include "kgllm/cli.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "kgllm/instance_io.hpp"
#include "kgllm/pipeline.hpp"

namespace kgllm {

namespace fs = std::filesystem;

namespace {

/// Every flag of every stage; one config file can drive a whole run.
struct RunConfig {
    std::string dataset_dir;
    std::string dataset_name;
    bool merge_splits = true;
    std::string out = "out";
    std::uint64_t seed = 0;

    double train_fraction = 0.80;
    double validation_fraction = 0.20;
    std::size_t max_nodes = 6;
    std::size_t per_root_cap = 10'000;
    std::size_t cell_cap = 20'000;
    unsigned threads = 0;

    std::string task = "link";
    std::string style = "kgllm";
    std::string icl = "none";
    std::size_t token_limit = 512;
    std::size_t max_options = 0;  // 0 lists every relation

    std::string stub;
    std::string endpoint;
    std::string model;
    std::string token_env = "KGLLM_API_TOKEN";
    std::size_t timeout_ms = 60'000;
    std::size_t retries = 2;
    std::size_t in_flight = 4;
    std::size_t backoff_ms = 200;
    std::string envelope = "completion";
    double temperature = 0.0;
    std::size_t max_tokens = 256;
    std::string system;
    double parse_ceiling = 1.0;

    std::string kind = "transe";
    std::size_t dim = 100;
    std::size_t epochs = 5;
    double learning_rate = 0.01;
    double margin = 1.0;
    double l2 = 0.03;
    std::size_t negatives = 1;
    std::size_t batch_size = 128;
    std::string checkpoint;

    std::vector<std::string> outcome_files;
    std::string report_out;
};

DatasetOptions dataset_options(const RunConfig& c) {
    if (c.dataset_dir.empty()) throw CLI::RequiredError("--dataset-dir");
    return {c.dataset_dir, c.dataset_name, c.merge_splits};
}

template <typename T, typename Parse>
T parse_enum(const std::string& text, Parse parse, std::string_view flag) {
    auto v = parse(text);
    if (!v) throw CLI::ValidationError(std::string(flag), fmt::format("unknown value '{}'", text));
    return *v;
}

void dump_config(const CLI::App& app, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.ini", std::ios::binary | std::ios::trunc);
    out << app.config_to_str(true, false);
}

void print_report(std::ostream& out, const Report& report, const fs::path& dir) {
    out << render_report_table(report);
    out << fmt::format("wrote {}\n", dir.string());
}

int dispatch(const CLI::App& app, const CLI::App& sub, const RunConfig& c, std::ostream& out,
             std::ostream& err) {
    const std::string name = sub.get_name();
    const fs::path root = c.out;

    if (name == "ingest") {
        const IngestResult r = run_ingest(dataset_options(c));
        out << describe_ingest(r);
        if (r.reference && !r.reference->ok()) {
            err << "counts differ from the published statistics\n";
            return kExitData;
        }
        return kExitOk;
    }

    if (name == "sample") {
        SampleStageOptions o;
        o.dataset = dataset_options(c);
        o.sampler.split.seed = c.seed;
        o.sampler.split.train_node_fraction = c.train_fraction;
        o.sampler.split.validation_fraction = c.validation_fraction;
        o.sampler.limits.max_nodes = c.max_nodes;
        o.sampler.limits.per_root_cap = c.per_root_cap;
        o.sampler.cell_cap = c.cell_cap;
        o.sampler.threads = c.threads;
        o.out = root;
        const auto r = run_sample_stage(o);
        dump_config(app, instances_dir(root));
        out << fmt::format("sample {}: train={} validation={} test={}\nwrote {}\n",
                           r.config_hash, r.train, r.validation, r.test,
                           instances_dir(root).string());
        return kExitOk;
    }

    const Task task = parse_enum<Task>(c.task, parse_task, "--task");
    const Style style = parse_enum<Style>(c.style, parse_style, "--style");
    const IclMode icl = parse_enum<IclMode>(c.icl, parse_icl, "--icl");

    if (name == "genprompts") {
        PromptStageOptions o;
        o.dataset = dataset_options(c);
        o.task = task;
        o.style = style;
        o.icl = icl;
        o.token_limit = c.token_limit;
        if (c.max_options > 0) o.max_options = c.max_options;
        o.out = root;
        const auto r = run_prompt_stage(o);
        const fs::path dir = prompts_dir(root, task, style, icl);
        dump_config(app, dir);
        out << fmt::format("genprompts {}: kept {}/{}/{} dropped {}/{}/{} (train/validation/test)\n",
                           r.config_hash, r.kept[0], r.kept[1], r.kept[2], r.dropped[0],
                           r.dropped[1], r.dropped[2]);
        if (r.icl_example_id) out << fmt::format("exemplar record {}\n", *r.icl_example_id);
        out << fmt::format("wrote {}\n", dir.string());
        return kExitOk;
    }

    if (name == "eval") {
        EvalStageOptions o;
        o.dataset = dataset_options(c);
        o.task = task;
        o.style = style;
        o.icl = icl;
        o.out = root;
        if (!c.stub.empty()) {
            o.stub = parse_enum<StubPolicy>(c.stub, parse_stub_policy, "--stub");
        } else if (c.endpoint.empty()) {
            throw CLI::ValidationError("--endpoint", "required unless --stub is given");
        }
        o.client.endpoint = c.endpoint;
        o.client.model = c.model;
        o.client.token_env = c.token_env;
        o.client.timeout = std::chrono::milliseconds(c.timeout_ms);
        o.client.max_retries = c.retries;
        o.client.max_in_flight = c.in_flight;
        o.client.backoff = std::chrono::milliseconds(c.backoff_ms);
        o.client.envelope = parse_enum<Envelope>(c.envelope, parse_envelope, "--envelope");
        o.client.temperature = c.temperature;
        o.client.max_tokens = c.max_tokens;
        o.system = c.system;
        o.parse_failure_ceiling = c.parse_ceiling;
        const auto r = run_eval_stage(o);
        dump_config(app, r.directory);
        print_report(out, r.report, r.directory);
        if (r.requests > 0 && r.failed_requests == r.requests) {
            err << "every request failed; see raw_response in outcomes.jsonl\n";
            return kExitTransport;
        }
        if (r.failed_requests > 0) {
            err << fmt::format("{} of {} requests failed\n", r.failed_requests, r.requests);
        }
        if (r.ceiling_exceeded) {
            err << fmt::format("parse failure rate {:.4f} exceeds the ceiling {:.4f}\n",
                               r.report.parse_failure_rate(), c.parse_ceiling);
            return kExitData;
        }
        return kExitOk;
    }

    const ModelKind kind = parse_enum<ModelKind>(c.kind, parse_model_kind, "--kind");

    if (name == "train-baseline") {
        BaselineTrainOptions o;
        o.dataset = dataset_options(c);
        o.kind = kind;
        o.train.dim = c.dim;
        o.train.epochs = c.epochs;
        o.train.learning_rate = c.learning_rate;
        o.train.margin = c.margin;
        o.train.l2 = c.l2;
        o.train.negatives_per_positive = c.negatives;
        o.train.batch_size = c.batch_size;
        o.train.seed = c.seed;
        o.out = root;
        const auto r = run_baseline_train(o);
        dump_config(app, baseline_dir(root, kind));
        for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
            out << fmt::format("epoch {} loss {:.6f}\n", e + 1, r.epoch_loss[e]);
        }
        out << fmt::format("wrote {}\n", r.checkpoint.string());
        return kExitOk;
    }

    if (name == "eval-baseline") {
        BaselineEvalOptions o;
        o.dataset = dataset_options(c);
        o.kind = kind;
        if (!c.checkpoint.empty()) o.checkpoint = fs::path(c.checkpoint);
        o.out = root;
        const auto r = run_baseline_eval(o);
        dump_config(app, r.directory);
        out << fmt::format("threshold {:.6g}\n", r.threshold);
        print_report(out, r.report, r.directory);
        return kExitOk;
    }

    if (name == "report") {
        std::vector<fs::path> files(c.outcome_files.begin(), c.outcome_files.end());
        const ComparisonTable table = merge_outcomes(files);
        out << render_comparison(table);
        if (!c.report_out.empty()) {
            const fs::path path = c.report_out;
            if (path.has_parent_path()) fs::create_directories(path.parent_path());
            std::ofstream f(path, std::ios::binary | std::ios::trunc);
            write_comparison_records(f, table);
            if (!f) throw DataError(fmt::format("cannot write {}", path.string()));
        }
        return kExitOk;
    }

    throw CLI::ValidationError(name, "unknown subcommand");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig c;
    CLI::App app{"Multi-hop link and relation prediction over knowledge graphs", "kgllm"};
    app.set_config("--config", "", "INI/TOML file with option values; flags override it");
    app.require_subcommand(1);
    app.fallthrough();

    app.add_option("--dataset-dir", c.dataset_dir, "OpenKE-format dataset directory");
    app.add_option("--dataset-name", c.dataset_name, "Dataset name (default: directory name)");
    app.add_option("--merge-splits", c.merge_splits,
                   "Merge train/valid/test triple files into one graph")
        ->capture_default_str();
    app.add_option("--out", c.out, "Artifact root directory")->capture_default_str();
    app.add_option("--seed", c.seed, "Seed for splits, sampling, exemplar and training")
        ->capture_default_str();

    app.add_option("--train-fraction", c.train_fraction, "Fraction of nodes in the training split")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--validation-fraction", c.validation_fraction,
                   "Fraction of training instances held out for validation")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--max-nodes", c.max_nodes, "Longest path, in nodes")
        ->check(CLI::Range(std::size_t{2}, kMaxPathNodes - 1))
        ->capture_default_str();
    app.add_option("--per-root-cap", c.per_root_cap, "Paths per root (0: unlimited)")
        ->capture_default_str();
    app.add_option("--cell-cap", c.cell_cap, "Instances per (hops, label) cell (0: unlimited)")
        ->capture_default_str();
    app.add_option("--threads", c.threads, "Sampler workers (0: hardware concurrency)")
        ->capture_default_str();

    app.add_option("--task", c.task, "link | relation")
        ->check(CLI::IsMember({"link", "relation"}))
        ->capture_default_str();
    app.add_option("--style", c.style, "ablation | kgllm")
        ->check(CLI::IsMember({"ablation", "kgllm"}))
        ->capture_default_str();
    app.add_option("--icl", c.icl, "none | one_shot")
        ->check(CLI::IsMember({"none", "one_shot"}))
        ->capture_default_str();
    app.add_option("--token-limit", c.token_limit, "Drop prompts estimated above this")
        ->capture_default_str();
    app.add_option("--max-options", c.max_options,
                   "Relation options listed in the instruction (0: all)")
        ->capture_default_str();

    // validated at dispatch so that a dumped config with stub="" replays
    app.add_option("--stub", c.stub, "oracle | constant_no | constant_yes | echo");
    app.add_option("--endpoint", c.endpoint, "OpenAI-compatible completion URL");
    app.add_option("--model", c.model, "Model name sent with each request");
    app.add_option("--token-env", c.token_env, "Environment variable holding the bearer token")
        ->capture_default_str();
    app.add_option("--timeout-ms", c.timeout_ms, "Per-request timeout")->capture_default_str();
    app.add_option("--retries", c.retries, "Retries after a transient failure")
        ->capture_default_str();
    app.add_option("--in-flight", c.in_flight, "Concurrent requests")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--backoff-ms", c.backoff_ms, "First retry delay, doubled per retry")
        ->capture_default_str();
    app.add_option("--envelope", c.envelope, "completion | chat")
        ->check(CLI::IsMember({"completion", "chat"}))
        ->capture_default_str();
    app.add_option("--temperature", c.temperature, "Sampling temperature")->capture_default_str();
    app.add_option("--max-tokens", c.max_tokens, "Generation limit")->capture_default_str();
    app.add_option("--system", c.system, "Row label in reports (default: stub or model name)");
    app.add_option("--parse-ceiling", c.parse_ceiling,
                   "Exit 2 when the unparseable fraction exceeds this")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();

    app.add_option("--kind", c.kind, "transe | distmult | complex")
        ->check(CLI::IsMember({"transe", "distmult", "complex"}))
        ->capture_default_str();
    app.add_option("--dim", c.dim, "Embedding dimension")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
    app.add_option("--lr", c.learning_rate, "SGD learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--margin", c.margin, "TransE ranking margin")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--l2", c.l2, "DistMult/ComplEx squared-norm penalty")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--negatives", c.negatives, "Corruptions per training triple")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--batch-size", c.batch_size, "Triples per SGD step")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--checkpoint", c.checkpoint,
                   "Checkpoint prefix (default: <out>/baselines/<kind>/model)");

    app.add_subcommand("ingest", "Load a dataset and compare its counts with published sizes");
    app.add_subcommand("sample", "Split nodes, enumerate and label paths, write instance files");
    app.add_subcommand("genprompts", "Render prompt records for one task/style/icl setting");
    app.add_subcommand("eval", "Query a model (or stub) on the test prompts and score it");
    app.add_subcommand("train-baseline", "Train an embedding baseline on the training nodes");
    app.add_subcommand("eval-baseline", "Calibrate a baseline on validation and score the test set");
    auto* report = app.add_subcommand("report", "Merge outcome files into one comparison table");
    report->add_option("outcomes", c.outcome_files, "outcomes.jsonl files")->required();
    report->add_option("--report-out", c.report_out, "Also write the table as JSON lines");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const CLI::App* sub = app.get_subcommands().front();
    try {
        return dispatch(app, *sub, c, out, err);
    } catch (const CLI::Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ClientError& e) {
        err << "transport error: " << e.what() << '\n';
        return kExitTransport;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        // DataError, FormatError, IngestError, RecordError and friends.
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace kgllm
