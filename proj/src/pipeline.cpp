#include "kgllm/pipeline.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "kgllm/instance_io.hpp"

namespace kgllm {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

MissingArtifact::MissingArtifact(const fs::path& expected, std::string_view producer)
    : DataError(fmt::format("missing {} (run `{}` first)", expected.string(), producer)),
      expected_(expected) {}

namespace {

constexpr std::array<Split, 3> kSplits{Split::train, Split::validation, Split::test};

/// key=value lines hashed in insertion order.
class HashInput {
public:
    template <typename T>
    HashInput& add(std::string_view key, const T& value) {
        text_ += fmt::format("{}={}\n", key, value);
        return *this;
    }
    HashInput& add_real(std::string_view key, double value) {
        text_ += fmt::format("{}={:.17g}\n", key, value);
        return *this;
    }
    std::string hex() const { return hex64(fnv1a64(text_)); }

private:
    std::string text_;
};

std::ifstream open_input(const fs::path& path, std::string_view producer) {
    if (!fs::exists(path)) throw MissingArtifact(path, producer);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot read {}", path.string()));
    return in;
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
    return out;
}

void close_output(std::ofstream& out, const fs::path& path) {
    out.close();
    if (!out) throw DataError(fmt::format("failed writing {}", path.string()));
}

Dataset load(const DatasetOptions& options) {
    LoadOptions lo;
    lo.merge_splits = options.merge_splits;
    lo.name = options.name;
    return load_dataset(options.dir, lo);
}

std::string instances_file(Split split) { return fmt::format("{}.jsonl", to_string(split)); }

struct SampleArtifacts {
    Provenance provenance;
    std::array<std::vector<PathInstance>, 3> splits;
};

SampleArtifacts read_sample_artifacts(const fs::path& out) {
    SampleArtifacts a;
    std::optional<std::string> hash;
    for (std::size_t s = 0; s < kSplits.size(); ++s) {
        const fs::path path = instances_dir(out) / instances_file(kSplits[s]);
        auto in = open_input(path, "sample");
        Provenance p;
        try {
            a.splits[s] = read_instances(in, &p);
        } catch (const RecordError& e) {
            throw DataError(fmt::format("{}: {}", path.string(), e.what()));
        }
        if (p.stage != "sample") {
            throw DataError(fmt::format("{} lacks a sample provenance header", path.string()));
        }
        if (hash && *hash != p.config_hash) {
            throw DataError(fmt::format("{} comes from a different sample run ({} vs {})",
                                        path.string(), p.config_hash, *hash));
        }
        hash = p.config_hash;
        a.provenance = p;
    }
    a.provenance.attributes.erase(
        std::remove_if(a.provenance.attributes.begin(), a.provenance.attributes.end(),
                       [](const auto& kv) { return kv.first == "split"; }),
        a.provenance.attributes.end());
    return a;
}

void check_dataset(const Dataset& ds, const Provenance& upstream, const fs::path& artifact) {
    const auto fp = upstream.attribute("dataset_fingerprint");
    if (fp && *fp != dataset_fingerprint(ds.graph)) {
        throw DataError(fmt::format("{} was produced from a different dataset than {}",
                                    artifact.string(), ds.manifest.directory.string()));
    }
}

std::vector<NodeId> read_train_nodes(const fs::path& out, const Provenance& sample) {
    const fs::path path = instances_dir(out) / "split.jsonl";
    auto in = open_input(path, "sample");
    std::string line;
    std::optional<Provenance> p;
    if (std::getline(in, line)) p = parse_provenance_line(line);
    if (!p || p->config_hash != sample.config_hash) {
        throw DataError(fmt::format("{} does not match the instance files", path.string()));
    }
    if (!std::getline(in, line)) throw DataError(fmt::format("{} is truncated", path.string()));
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("train")) {
        throw DataError(fmt::format("{}: malformed node split", path.string()));
    }
    return j.at("train").get<std::vector<NodeId>>();
}

Provenance read_json_provenance(const fs::path& path, std::string_view producer) {
    auto in = open_input(path, producer);
    std::string line;
    std::getline(in, line);
    auto p = parse_provenance_line(line);
    if (!p) throw DataError(fmt::format("{} lacks a provenance header", path.string()));
    return *p;
}

std::string stage_dir_name(Task task, Style style, IclMode icl) {
    return fmt::format("{}_{}_{}", to_string(task), to_string(style), to_string(icl));
}

void write_report_files(const fs::path& dir, const Report& report,
                        std::span<const EvalOutcome> outcomes, const Provenance& p) {
    {
        const fs::path path = dir / "outcomes.jsonl";
        auto out = open_output(path);
        write_outcomes(out, outcomes, &p);
        close_output(out, path);
    }
    {
        const fs::path path = dir / "report.txt";
        auto out = open_output(path);
        out << render_report_table(report);
        close_output(out, path);
    }
    {
        const fs::path path = dir / "report.jsonl";
        auto out = open_output(path);
        write_report_records(out, report, &p);
        close_output(out, path);
    }
}

std::string fmt_metric(const std::optional<double>& v) {
    return v ? fmt::format("{:.4f}", *v) : std::string("-");
}

}  // namespace

std::string dataset_fingerprint(const KnowledgeGraph& g) {
    std::uint64_t h = fnv1a64(fmt::format("{} {}\n", g.entity_count(), g.relation_count()));
    for (const auto& t : g.triples()) {
        h = fnv1a64(fmt::format("{} {} {}\n", t.head, t.relation, t.tail), h);
    }
    return hex64(h);
}

fs::path instances_dir(const fs::path& out) { return out / "instances"; }

fs::path prompts_dir(const fs::path& out, Task task, Style style, IclMode icl) {
    return out / "prompts" / stage_dir_name(task, style, icl);
}

fs::path eval_dir(const fs::path& out, Task task, Style style, IclMode icl,
                  std::string_view system) {
    return out / "eval" / stage_dir_name(task, style, icl) / std::string(system);
}

fs::path baseline_dir(const fs::path& out, ModelKind kind) {
    return out / "baselines" / std::string(to_string(kind));
}

// ---- ingest ---------------------------------------------------------------

IngestResult run_ingest(const DatasetOptions& dataset) {
    Dataset ds = load(dataset);
    IngestResult r;
    r.manifest = ds.manifest;
    r.duplicates_collapsed = ds.graph.duplicates_collapsed();
    r.reference = check_reference(ds.manifest);
    return r;
}

std::string describe_ingest(const IngestResult& r) {
    const auto& m = r.manifest;
    std::string s;
    s += fmt::format("dataset            {}\n", m.name);
    s += fmt::format("directory          {}\n", m.directory.string());
    s += fmt::format("entities           {}\n", m.entities);
    s += fmt::format("relations          {}\n", m.relations);
    s += fmt::format("triples            {}{}\n", m.triples,
                     m.merged_splits ? " (all splits)" : " (train split)");
    s += fmt::format("unique triples     {} ({} duplicates collapsed)\n", m.unique_triples,
                     r.duplicates_collapsed);
    auto opt = [](const std::optional<std::size_t>& v) {
        return v ? fmt::format("{}", *v) : std::string("absent");
    };
    s += fmt::format("train/valid/test   {} / {} / {}\n", opt(m.train_triples),
                     opt(m.valid_triples), opt(m.test_triples));
    s += fmt::format("readable names     entities={} relations={}\n",
                     m.entity_names_readable ? "yes" : "no",
                     m.relation_names_readable ? "yes" : "no");
    if (!r.reference) {
        s += "reference          none for this dataset name\n";
        return s;
    }
    const auto& ref = *r.reference;
    auto mark = [](bool ok) { return ok ? "match" : "MISMATCH"; };
    s += fmt::format("reference          {} entities={} relations={} triples={}\n",
                     ref.expected.name, ref.expected.entities, ref.expected.relations,
                     ref.expected.triples);
    s += fmt::format("  entities         {}\n", mark(ref.entities_match));
    s += fmt::format("  relations        {}\n", mark(ref.relations_match));
    s += fmt::format("  triples          {} (basis: {})\n", mark(ref.triples_match),
                     ref.triple_basis);
    return s;
}

// ---- sample ---------------------------------------------------------------

SampleStageResult run_sample_stage(const SampleStageOptions& options) {
    Dataset ds = load(options.dataset);
    const auto& cfg = options.sampler;
    const std::string fingerprint = dataset_fingerprint(ds.graph);

    SampleStageResult result;
    result.config_hash = HashInput{}
                             .add("stage", "sample")
                             .add("dataset", fingerprint)
                             .add("seed", cfg.split.seed)
                             .add_real("train_node_fraction", cfg.split.train_node_fraction)
                             .add_real("validation_fraction", cfg.split.validation_fraction)
                             .add("min_nodes", cfg.limits.min_nodes)
                             .add("max_nodes", cfg.limits.max_nodes)
                             .add("per_root_cap", cfg.limits.per_root_cap)
                             .add("cell_cap", cfg.cell_cap)
                             .hex();

    SampleResult sampled = run_sampling(ds.graph, cfg);
    result.train = sampled.train.size();
    result.validation = sampled.validation.size();
    result.test = sampled.test.size();

    Provenance p;
    p.stage = "sample";
    p.config_hash = result.config_hash;
    p.seed = cfg.split.seed;
    p.set("dataset", ds.manifest.name);
    p.set("dataset_fingerprint", fingerprint);

    const fs::path dir = instances_dir(options.out);
    const std::array<const std::vector<PathInstance>*, 3> sets{&sampled.train,
                                                               &sampled.validation, &sampled.test};
    for (std::size_t s = 0; s < kSplits.size(); ++s) {
        Provenance ps = p;
        ps.set("split", std::string(to_string(kSplits[s])));
        const fs::path path = dir / instances_file(kSplits[s]);
        auto out = open_output(path);
        write_instances(out, *sets[s], &ps);
        close_output(out, path);
    }
    {
        const fs::path path = dir / "split.jsonl";
        auto out = open_output(path);
        ordered_json j;
        j["train"] = sampled.nodes.train;
        j["test"] = sampled.nodes.test;
        out << provenance_line(p) << '\n' << j.dump() << '\n';
        close_output(out, path);
    }
    {
        const fs::path path = dir / "stats.jsonl";
        auto out = open_output(path);
        out << provenance_line(p) << '\n';
        auto stats_json = [](std::string_view split, const SamplingStats& st) {
            ordered_json j;
            j["split"] = split;
            j["roots_visited"] = st.enumeration.roots_visited;
            j["roots_truncated"] = st.enumeration.roots_truncated;
            j["paths_emitted"] = st.enumeration.paths_emitted;
            j["dropped_by_cell_cap"] = st.dropped_by_cell_cap;
            j["stopped_early"] = st.stopped_early;
            ordered_json cells = ordered_json::array();
            for (std::size_t h = 1; h < st.cell_counts.size(); ++h) {
                const auto& c = st.cell_counts[h];
                if (c[0] == 0 && c[1] == 0) continue;
                cells.push_back({{"hops", h},
                                 {"positive", c[static_cast<int>(Label::positive)]},
                                 {"negative", c[static_cast<int>(Label::negative)]}});
            }
            j["cells"] = std::move(cells);
            return j.dump();
        };
        out << stats_json("train", sampled.train_stats) << '\n';
        out << stats_json("test", sampled.test_stats) << '\n';
        close_output(out, path);
    }
    return result;
}

// ---- genprompts -----------------------------------------------------------

PromptStageResult run_prompt_stage(const PromptStageOptions& options) {
    Dataset ds = load(options.dataset);
    SampleArtifacts sample = read_sample_artifacts(options.out);
    check_dataset(ds, sample.provenance, instances_dir(options.out));

    PromptStageResult result;
    result.config_hash =
        HashInput{}
            .add("stage", "genprompts")
            .add("sample", sample.provenance.config_hash)
            .add("task", to_string(options.task))
            .add("style", to_string(options.style))
            .add("icl", to_string(options.icl))
            .add("token_limit", options.token_limit)
            .add("max_options",
                 options.max_options ? fmt::format("{}", *options.max_options) : "all")
            .hex();

    const auto relation_ids =
        relation_options(ds.lexicon, sample.splits[1], options.max_options);
    PromptBuilder builder(options.task, options.style, options.icl, ds.lexicon, relation_ids);

    std::array<std::vector<PromptRecord>, 3> records;
    for (std::size_t s = 0; s < kSplits.size(); ++s) {
        records[s] = builder.render_all(sample.splits[s]);
        for (auto& r : records[s]) r.meta.config_hash = result.config_hash;
    }

    const fs::path dir = prompts_dir(options.out, options.task, options.style, options.icl);
    std::optional<PromptRecord> example;
    if (options.icl == IclMode::one_shot) {
        try {
            example = select_icl_example(records[0], options.task, options.style,
                                         sample.provenance.seed);
        } catch (const ConfigurationError& e) {
            throw DataError(e.what());
        }
        result.icl_example_id = example->meta.id;
        for (auto& split_records : records) {
            for (auto& r : split_records) r.meta.icl_example_id = example->meta.id;
        }
    }

    for (std::size_t s = 0; s < kSplits.size(); ++s) {
        BudgetResult kept =
            token_budget_filter(records[s], options.token_limit, example ? &*example : nullptr);
        result.kept[s] = kept.kept.size();
        result.dropped[s] = kept.dropped;
        const fs::path path = dir / instances_file(kSplits[s]);
        auto out = open_output(path);
        export_jsonl(out, kept.kept);
        close_output(out, path);
    }

    {
        const fs::path path = dir / "icl_example.json";
        if (example) {
            auto out = open_output(path);
            out << record_to_json(*example) << '\n';
            close_output(out, path);
        } else if (fs::exists(path)) {
            fs::remove(path);
        }
    }
    {
        const fs::path path = dir / "special_tokens.txt";
        auto out = open_output(path);
        emit_special_tokens_manifest(out, ds.graph.entity_count(), ds.graph.relation_count());
        close_output(out, path);
    }
    {
        Provenance p = sample.provenance;
        p.stage = "genprompts";
        p.config_hash = result.config_hash;
        p.set("instance_set", sample.provenance.config_hash);
        p.set("task", std::string(to_string(options.task)));
        p.set("style", std::string(to_string(options.style)));
        p.set("icl", std::string(to_string(options.icl)));
        const fs::path path = dir / "provenance.json";
        auto out = open_output(path);
        out << provenance_line(p) << '\n';
        ordered_json counts;
        for (std::size_t s = 0; s < kSplits.size(); ++s) {
            counts[std::string(to_string(kSplits[s]))] = {{"kept", result.kept[s]},
                                                          {"dropped", result.dropped[s]}};
        }
        ordered_json j;
        j["counts"] = std::move(counts);
        j["relation_options"] = relation_ids;
        if (example) j["icl_example_id"] = example->meta.id;
        out << j.dump() << '\n';
        close_output(out, path);
    }
    return result;
}

// ---- eval -----------------------------------------------------------------

EvalStageResult run_eval_stage(const EvalStageOptions& options) {
    Dataset ds = load(options.dataset);
    const fs::path pdir = prompts_dir(options.out, options.task, options.style, options.icl);
    const Provenance upstream = read_json_provenance(pdir / "provenance.json", "genprompts");
    check_dataset(ds, upstream, pdir);

    std::vector<PromptRecord> records;
    {
        const fs::path path = pdir / "test.jsonl";
        auto in = open_input(path, "genprompts");
        try {
            records = import_jsonl(in);
        } catch (const RecordError& e) {
            throw DataError(fmt::format("{}: {}", path.string(), e.what()));
        }
        for (const auto& r : records) {
            if (r.meta.config_hash != upstream.config_hash) {
                throw DataError(fmt::format("{}: record {} carries config hash {}, expected {}",
                                            path.string(), r.meta.id, r.meta.config_hash,
                                            upstream.config_hash));
            }
        }
    }
    std::optional<PromptRecord> example;
    if (options.icl == IclMode::one_shot) {
        const fs::path path = pdir / "icl_example.json";
        auto in = open_input(path, "genprompts");
        std::string line;
        std::getline(in, line);
        try {
            example = record_from_json(line);
        } catch (const RecordError& e) {
            throw DataError(fmt::format("{}: {}", path.string(), e.what()));
        }
    }

    std::string system = options.system;
    if (system.empty()) {
        system = options.stub ? fmt::format("stub-{}", to_string(*options.stub))
                              : (options.client.model.empty() ? "llm" : options.client.model);
    }

    std::vector<CompletionRequest> requests;
    requests.reserve(records.size());
    for (const auto& r : records) {
        requests.push_back({r.meta.id, assemble(r, example ? &*example : nullptr), &r});
    }

    std::unique_ptr<CompletionBackend> backend;
    if (options.stub) {
        backend = std::make_unique<StubBackend>(*options.stub);
    } else {
        backend = std::make_unique<HttpBackend>(options.client);
    }
    const auto batch = run_batch(requests, *backend, options.client.max_in_flight);

    EvalStageResult result;
    result.requests = records.size();
    std::vector<EvalOutcome> outcomes;
    outcomes.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (batch[i].response) {
            outcomes.push_back(make_outcome(records[i], *batch[i].response, ds.lexicon));
        } else {
            ++result.failed_requests;
            outcomes.push_back(failed_outcome(records[i], batch[i].error));
        }
    }
    result.report = per_hop_report(outcomes, options.task);
    result.ceiling_exceeded = result.report.parse_failure_rate() > options.parse_failure_ceiling;

    Provenance p;
    p.stage = "eval";
    p.seed = upstream.seed;
    HashInput h;
    h.add("stage", "eval").add("prompts", upstream.config_hash).add("system", system);
    if (!options.stub) {
        h.add("endpoint", options.client.endpoint)
            .add("model", options.client.model)
            .add_real("temperature", options.client.temperature)
            .add("max_tokens", options.client.max_tokens)
            .add("envelope", to_string(options.client.envelope));
    }
    p.config_hash = h.hex();
    for (const char* key : {"dataset", "dataset_fingerprint", "instance_set"}) {
        if (auto v = upstream.attribute(key)) p.set(key, std::string(*v));
    }
    p.set("prompt_set", upstream.config_hash);
    p.set("task", std::string(to_string(options.task)));
    p.set("style", std::string(to_string(options.style)));
    p.set("icl", std::string(to_string(options.icl)));
    p.set("system", system);

    result.directory = eval_dir(options.out, options.task, options.style, options.icl, system);
    write_report_files(result.directory, result.report, outcomes, p);
    return result;
}

// ---- baselines ------------------------------------------------------------

BaselineTrainResult run_baseline_train(const BaselineTrainOptions& options) {
    Dataset ds = load(options.dataset);
    SampleArtifacts sample = read_sample_artifacts(options.out);
    check_dataset(ds, sample.provenance, instances_dir(options.out));
    const auto train_nodes = read_train_nodes(options.out, sample.provenance);
    for (NodeId n : train_nodes) {
        if (n >= ds.graph.entity_count()) {
            throw DataError(fmt::format("node split names entity {} beyond the dataset", n));
        }
    }
    const KnowledgeGraph g_train = ds.graph.induced_subgraph(train_nodes);
    if (g_train.triples().empty()) {
        throw DataError("the training-node subgraph has no triples to train on");
    }

    const auto& c = options.train;
    BaselineTrainResult result;
    result.config_hash = HashInput{}
                             .add("stage", "train-baseline")
                             .add("sample", sample.provenance.config_hash)
                             .add("kind", to_string(options.kind))
                             .add("dim", c.dim)
                             .add("epochs", c.epochs)
                             .add_real("learning_rate", c.learning_rate)
                             .add_real("margin", c.margin)
                             .add("negatives", c.negatives_per_positive)
                             .add("batch_size", c.batch_size)
                             .add("seed", c.seed)
                             .hex();

    TrainResult trained = train(g_train, options.kind, c);
    result.epoch_loss = trained.epoch_loss;
    const fs::path dir = baseline_dir(options.out, options.kind);
    fs::create_directories(dir);
    result.checkpoint = dir / "model";
    save_checkpoint(trained.model, result.checkpoint);

    Provenance p = sample.provenance;
    p.stage = "train-baseline";
    p.config_hash = result.config_hash;
    p.seed = c.seed;
    p.set("instance_set", sample.provenance.config_hash);
    p.set("kind", std::string(to_string(options.kind)));
    const fs::path path = dir / "provenance.json";
    auto out = open_output(path);
    out << provenance_line(p) << '\n';
    ordered_json j;
    j["training_triples"] = g_train.triples().size();
    j["epoch_loss"] = result.epoch_loss;
    out << j.dump() << '\n';
    close_output(out, path);
    return result;
}

BaselineEvalResult run_baseline_eval(const BaselineEvalOptions& options) {
    Dataset ds = load(options.dataset);
    SampleArtifacts sample = read_sample_artifacts(options.out);
    check_dataset(ds, sample.provenance, instances_dir(options.out));

    const fs::path dir = baseline_dir(options.out, options.kind);
    const fs::path prefix = options.checkpoint.value_or(dir / "model");
    if (!fs::exists(fs::path(prefix.string() + ".header"))) {
        throw MissingArtifact(prefix.string() + ".header", "train-baseline");
    }
    BaselineModel model;
    try {
        model = load_checkpoint(prefix);
    } catch (const CheckpointError& e) {
        throw DataError(e.what());
    }
    if (model.entity_count != ds.graph.entity_count() ||
        model.relation_count != ds.graph.relation_count()) {
        throw DataError(fmt::format(
            "checkpoint {} has {} entities / {} relations; dataset has {} / {}",
            prefix.string(), model.entity_count, model.relation_count, ds.graph.entity_count(),
            ds.graph.relation_count()));
    }

    BaselineEvalResult result;
    result.threshold = calibrate_threshold(model, sample.splits[1]);

    std::vector<EvalOutcome> outcomes;
    outcomes.reserve(sample.splits[2].size());
    for (const auto& inst : sample.splits[2]) {
        const double s = endpoint_score(model, inst);
        EvalOutcome o;
        o.record_id = inst.id;
        o.task = Task::link;
        o.hops = inst.hops();
        o.gold_label = inst.label;
        o.gold_relation = inst.gold_relation;
        o.predicted_link = s >= result.threshold ? LinkAnswer::yes : LinkAnswer::no;
        o.parsed = true;
        o.raw_response = fmt::format("score={:.17g} threshold={:.17g}", s, result.threshold);
        outcomes.push_back(std::move(o));
    }
    result.report = per_hop_report(outcomes, Task::link);

    Provenance p;
    p.stage = "eval-baseline";
    p.seed = model.config.seed;
    std::ifstream header(prefix.string() + ".header", std::ios::binary);
    std::ostringstream header_text;
    header_text << header.rdbuf();
    p.config_hash = HashInput{}
                        .add("stage", "eval-baseline")
                        .add("sample", sample.provenance.config_hash)
                        .add("checkpoint", hex64(fnv1a64(header_text.str())))
                        .hex();
    for (const char* key : {"dataset", "dataset_fingerprint"}) {
        if (auto v = sample.provenance.attribute(key)) p.set(key, std::string(*v));
    }
    p.set("instance_set", sample.provenance.config_hash);
    p.set("task", "link");
    p.set("system", std::string(to_string(options.kind)));
    p.set("threshold", fmt::format("{:.17g}", result.threshold));

    result.directory = dir / "eval";
    write_report_files(result.directory, result.report, outcomes, p);
    return result;
}

// ---- report ---------------------------------------------------------------

ComparisonTable merge_outcomes(const std::vector<fs::path>& outcome_files) {
    if (outcome_files.empty()) throw DataError("report needs at least one outcome file");
    ComparisonTable table;
    std::map<std::string, std::string> instance_sets;  // dataset -> instance_set
    std::map<std::string, fs::path> instance_set_source;
    std::optional<Task> task;

    for (const auto& path : outcome_files) {
        auto in = open_input(path, "eval");
        Provenance p;
        std::vector<EvalOutcome> outcomes;
        try {
            outcomes = read_outcomes(in, &p);
        } catch (const RecordError& e) {
            throw DataError(fmt::format("{}: {}", path.string(), e.what()));
        }
        if (p.stage.empty()) {
            throw DataError(fmt::format("{} lacks a provenance header", path.string()));
        }
        auto attr = [&](std::string_view key) -> std::string {
            auto v = p.attribute(key);
            if (!v) {
                throw DataError(
                    fmt::format("{}: provenance lacks the '{}' attribute", path.string(), key));
            }
            return std::string(*v);
        };
        const std::string dataset = attr("dataset");
        const std::string system = attr("system");
        const std::string instance_set = attr("instance_set");
        const auto file_task = parse_task(attr("task"));
        if (!file_task) throw DataError(fmt::format("{}: unknown task", path.string()));
        if (task && *task != *file_task) {
            throw DataError(fmt::format("{} scores the {} task; earlier files score {}",
                                        path.string(), to_string(*file_task), to_string(*task)));
        }
        task = file_task;

        auto [it, inserted] = instance_sets.emplace(dataset, instance_set);
        if (!inserted && it->second != instance_set) {
            throw DataError(fmt::format(
                "{} and {} evaluate {} on different instance sets ({} vs {})", path.string(),
                instance_set_source[dataset].string(), dataset, instance_set, it->second));
        }
        instance_set_source.emplace(dataset, path);

        auto index_of = [](std::vector<std::string>& v, const std::string& key) {
            auto pos = std::find(v.begin(), v.end(), key);
            if (pos != v.end()) return static_cast<std::size_t>(pos - v.begin());
            v.push_back(key);
            return v.size() - 1;
        };
        const std::size_t row = index_of(table.systems, system);
        const std::size_t col = index_of(table.datasets, dataset);
        table.cells.resize(table.systems.size());
        for (auto& r : table.cells) r.resize(table.datasets.size());
        if (table.cells[row][col]) {
            throw DataError(fmt::format("{} repeats system '{}' on dataset '{}'", path.string(),
                                        system, dataset));
        }
        const MetricRow m = compute_metrics(outcomes, *file_task);
        table.cells[row][col] = ComparisonCell{m.f1, m.auc, m.accuracy, m.n};
    }
    table.task = *task;
    return table;
}

std::string render_comparison(const ComparisonTable& table) {
    const bool link = table.task == Task::link;
    std::size_t name_width = 6;
    for (const auto& s : table.systems) name_width = std::max(name_width, s.size());
    const std::size_t cell_width = link ? 15 : 8;

    std::string out;
    out += fmt::format("{:<{}}", "Model", name_width);
    for (const auto& d : table.datasets) {
        out += fmt::format("  {:>{}}", d.substr(0, cell_width), cell_width);
    }
    out += '\n';
    out += fmt::format("{:<{}}", "", name_width);
    for (std::size_t i = 0; i < table.datasets.size(); ++i) {
        out += fmt::format("  {:>{}}", link ? "F1 / AUC" : "Acc", cell_width);
    }
    out += '\n';
    for (std::size_t r = 0; r < table.systems.size(); ++r) {
        out += fmt::format("{:<{}}", table.systems[r], name_width);
        for (std::size_t c = 0; c < table.datasets.size(); ++c) {
            const auto& cell = table.cells[r][c];
            std::string text = "-";
            if (cell) {
                text = link ? fmt_metric(cell->f1) + " / " + fmt_metric(cell->auc)
                            : fmt_metric(cell->accuracy);
            }
            out += fmt::format("  {:>{}}", text, cell_width);
        }
        out += '\n';
    }
    return out;
}

void write_comparison_records(std::ostream& out, const ComparisonTable& table) {
    auto value = [](const std::optional<double>& v) {
        return v ? ordered_json(*v) : ordered_json(nullptr);
    };
    for (std::size_t r = 0; r < table.systems.size(); ++r) {
        for (std::size_t c = 0; c < table.datasets.size(); ++c) {
            const auto& cell = table.cells[r][c];
            if (!cell) continue;
            ordered_json j;
            j["system"] = table.systems[r];
            j["dataset"] = table.datasets[c];
            j["task"] = to_string(table.task);
            j["n"] = cell->n;
            if (table.task == Task::link) {
                j["f1"] = value(cell->f1);
                j["auc"] = value(cell->auc);
            } else {
                j["accuracy"] = value(cell->accuracy);
            }
            out << j.dump() << '\n';
        }
    }
}

}  // namespace kgllm
