#include "kgllm/baselines.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "kgllm/random.hpp"

namespace kgllm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint dumps assume a little-endian host");

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::transe: return "transe";
        case ModelKind::distmult: return "distmult";
        case ModelKind::complex: return "complex";
    }
    return "transe";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "transe") return ModelKind::transe;
    if (lower == "distmult") return ModelKind::distmult;
    if (lower == "complex") return ModelKind::complex;
    return std::nullopt;
}

namespace {

enum Table : int { kEntityRe = 0, kEntityIm = 1, kRelationRe = 2, kRelationIm = 3 };

std::span<const double> row_of(const std::vector<double>& table, std::size_t row, std::size_t dim) {
    return std::span<const double>(table).subspan(row * dim, dim);
}

std::span<double> mutable_row(std::vector<double>& table, std::size_t row, std::size_t dim) {
    return std::span<double>(table).subspan(row * dim, dim);
}

std::vector<double>& table_ref(BaselineModel& m, int table) {
    switch (table) {
        case kEntityRe: return m.entity_re;
        case kEntityIm: return m.entity_im;
        case kRelationRe: return m.relation_re;
        default: return m.relation_im;
    }
}

void normalize(std::span<double> row) {
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& v : row) v /= norm;
    }
}

void check_ids(const BaselineModel& m, NodeId h, RelationId r, NodeId t) {
    if (h >= m.entity_count || t >= m.entity_count || r >= m.relation_count) {
        throw BoundsError(fmt::format("triple ({}, {}, {}) out of range for model with {} entities / "
                                      "{} relations",
                                      h, r, t, m.entity_count, m.relation_count));
    }
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Adds scale * d score(h, r, t) / d params into `out`.
void add_score_gradient(const BaselineModel& m, const Triple& tr, double scale, Gradient& out) {
    const std::size_t d = m.dim;
    auto h = m.entity(tr.head);
    auto r = m.relation(tr.relation);
    auto t = m.entity(tr.tail);
    std::vector<double> gh(d), gr(d), gt(d);

    switch (m.kind) {
        case ModelKind::transe: {
            double norm = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double x = h[i] + r[i] - t[i];
                norm += x * x;
            }
            norm = std::sqrt(norm);
            if (norm < 1e-12) return;
            for (std::size_t i = 0; i < d; ++i) {
                const double u = (h[i] + r[i] - t[i]) / norm;
                gh[i] = -u;
                gr[i] = -u;
                gt[i] = u;
            }
            break;
        }
        case ModelKind::distmult: {
            for (std::size_t i = 0; i < d; ++i) {
                gh[i] = r[i] * t[i];
                gr[i] = h[i] * t[i];
                gt[i] = h[i] * r[i];
            }
            break;
        }
        case ModelKind::complex: {
            auto hi = m.entity_imag(tr.head);
            auto ri = m.relation_imag(tr.relation);
            auto ti = m.entity_imag(tr.tail);
            std::vector<double> ghi(d), gri(d), gti(d);
            for (std::size_t i = 0; i < d; ++i) {
                const double a = h[i], b = hi[i], c = r[i], dd = ri[i], e = t[i], f = ti[i];
                gh[i] = c * e + dd * f;
                ghi[i] = c * f - dd * e;
                gr[i] = a * e + b * f;
                gri[i] = a * f - b * e;
                gt[i] = a * c - b * dd;
                gti[i] = a * dd + b * c;
            }
            out.add(kEntityIm, tr.head, ghi, scale);
            out.add(kRelationIm, tr.relation, gri, scale);
            out.add(kEntityIm, tr.tail, gti, scale);
            break;
        }
    }
    out.add(kEntityRe, tr.head, gh, scale);
    out.add(kRelationRe, tr.relation, gr, scale);
    out.add(kEntityRe, tr.tail, gt, scale);
}

}  // namespace

std::span<const double> BaselineModel::entity(NodeId id) const { return row_of(entity_re, id, dim); }
std::span<const double> BaselineModel::entity_imag(NodeId id) const {
    return row_of(entity_im, id, dim);
}
std::span<const double> BaselineModel::relation(RelationId id) const {
    return row_of(relation_re, id, dim);
}
std::span<const double> BaselineModel::relation_imag(RelationId id) const {
    return row_of(relation_im, id, dim);
}

void Gradient::add(int table, std::uint32_t row, std::span<const double> values, double scale) {
    auto& acc = rows[{table, row}];
    if (acc.empty()) acc.assign(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) acc[i] += scale * values[i];
}

BaselineModel init_model(ModelKind kind, std::size_t entity_count, std::size_t relation_count,
                         const TrainConfig& config) {
    if (config.dim == 0) throw std::invalid_argument("embedding dimension must be positive");
    BaselineModel m;
    m.kind = kind;
    m.entity_count = entity_count;
    m.relation_count = relation_count;
    m.dim = config.dim;
    m.config = config;

    Rng rng(derive_seed(config.seed, 0xE1B));
    const double bound = 6.0 / std::sqrt(static_cast<double>(config.dim));
    auto fill = [&](std::vector<double>& table, std::size_t rows) {
        table.resize(rows * config.dim);
        for (double& v : table) v = rng.uniform(-bound, bound);
    };
    fill(m.entity_re, entity_count);
    fill(m.relation_re, relation_count);
    if (kind == ModelKind::complex) {
        fill(m.entity_im, entity_count);
        fill(m.relation_im, relation_count);
    }
    if (kind == ModelKind::transe) {
        for (std::size_t i = 0; i < entity_count; ++i) normalize(mutable_row(m.entity_re, i, m.dim));
        for (std::size_t i = 0; i < relation_count; ++i) {
            normalize(mutable_row(m.relation_re, i, m.dim));
        }
    }
    return m;
}

double score_triple(const BaselineModel& m, NodeId head, RelationId relation, NodeId tail) {
    check_ids(m, head, relation, tail);
    auto h = m.entity(head);
    auto r = m.relation(relation);
    auto t = m.entity(tail);
    double s = 0.0;
    switch (m.kind) {
        case ModelKind::transe:
            for (std::size_t i = 0; i < m.dim; ++i) {
                const double x = h[i] + r[i] - t[i];
                s += x * x;
            }
            return -std::sqrt(s);
        case ModelKind::distmult:
            for (std::size_t i = 0; i < m.dim; ++i) s += h[i] * r[i] * t[i];
            return s;
        case ModelKind::complex: {
            auto hi = m.entity_imag(head);
            auto ri = m.relation_imag(relation);
            auto ti = m.entity_imag(tail);
            for (std::size_t i = 0; i < m.dim; ++i) {
                // Re((a + bi)(c + di)(e - fi))
                const double re = h[i] * r[i] - hi[i] * ri[i];
                const double im = h[i] * ri[i] + hi[i] * r[i];
                s += re * t[i] + im * ti[i];
            }
            return s;
        }
    }
    return s;
}

namespace {

/// Squared norm of every parameter row a triple touches.
double squared_norms(const BaselineModel& m, const Triple& t) {
    double s = 0.0;
    auto add = [&](std::span<const double> row) {
        for (double v : row) s += v * v;
    };
    add(m.entity(t.head));
    add(m.relation(t.relation));
    add(m.entity(t.tail));
    if (m.kind == ModelKind::complex) {
        add(m.entity_imag(t.head));
        add(m.relation_imag(t.relation));
        add(m.entity_imag(t.tail));
    }
    return s;
}

void add_norm_gradient(const BaselineModel& m, const Triple& t, double scale, Gradient& out) {
    out.add(kEntityRe, t.head, m.entity(t.head), 2.0 * scale);
    out.add(kRelationRe, t.relation, m.relation(t.relation), 2.0 * scale);
    out.add(kEntityRe, t.tail, m.entity(t.tail), 2.0 * scale);
    if (m.kind == ModelKind::complex) {
        out.add(kEntityIm, t.head, m.entity_imag(t.head), 2.0 * scale);
        out.add(kRelationIm, t.relation, m.relation_imag(t.relation), 2.0 * scale);
        out.add(kEntityIm, t.tail, m.entity_imag(t.tail), 2.0 * scale);
    }
}

}  // namespace

double pair_loss(const BaselineModel& m, const Triple& positive, const Triple& negative) {
    const double sp = score_triple(m, positive.head, positive.relation, positive.tail);
    const double sn = score_triple(m, negative.head, negative.relation, negative.tail);
    if (m.kind == ModelKind::transe) return std::max(0.0, m.config.margin + sn - sp);
    return softplus(-sp) + softplus(sn) +
           m.config.l2 * (squared_norms(m, positive) + squared_norms(m, negative));
}

void accumulate_pair_gradient(const BaselineModel& m, const Triple& positive,
                              const Triple& negative, Gradient& out) {
    const double sp = score_triple(m, positive.head, positive.relation, positive.tail);
    const double sn = score_triple(m, negative.head, negative.relation, negative.tail);
    if (m.kind == ModelKind::transe) {
        if (m.config.margin + sn - sp <= 0.0) return;
        add_score_gradient(m, positive, -1.0, out);
        add_score_gradient(m, negative, 1.0, out);
        return;
    }
    add_score_gradient(m, positive, -sigmoid(-sp), out);
    add_score_gradient(m, negative, sigmoid(sn), out);
    if (m.config.l2 > 0.0) {
        add_norm_gradient(m, positive, m.config.l2, out);
        add_norm_gradient(m, negative, m.config.l2, out);
    }
}

namespace {

std::optional<Triple> corrupt(const KnowledgeGraph& g, const Triple& positive, Rng& rng) {
    constexpr int kAttempts = 64;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        Triple neg = positive;
        const auto e = static_cast<NodeId>(rng.uniform_index(g.entity_count()));
        if (rng.uniform_index(2) == 0) {
            neg.head = e;
        } else {
            neg.tail = e;
        }
        if (!g.contains(neg)) return neg;
    }
    return std::nullopt;
}

}  // namespace

TrainResult train(const KnowledgeGraph& g_train, ModelKind kind, const TrainConfig& config) {
    if (g_train.empty()) throw std::invalid_argument("cannot train a baseline on an empty graph");
    if (config.batch_size == 0 || config.negatives_per_positive == 0 ||
        !(config.learning_rate > 0.0)) {
        throw std::invalid_argument("batch size, negatives per positive and learning rate must be "
                                    "positive");
    }
    TrainResult result{init_model(kind, g_train.entity_count(), g_train.relation_count(), config),
                       {}};
    BaselineModel& m = result.model;

    std::vector<Triple> order(g_train.triples().begin(), g_train.triples().end());
    Rng rng(derive_seed(config.seed, 0x7EA));

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t pairs_total = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            Gradient grad;
            std::size_t pairs = 0;
            for (std::size_t i = start; i < stop; ++i) {
                for (std::size_t k = 0; k < config.negatives_per_positive; ++k) {
                    auto neg = corrupt(g_train, order[i], rng);
                    if (!neg) continue;
                    loss_sum += pair_loss(m, order[i], *neg);
                    accumulate_pair_gradient(m, order[i], *neg, grad);
                    ++pairs;
                }
            }
            if (pairs == 0) continue;
            pairs_total += pairs;
            // Summed, not averaged: each pair moves its rows by lr * gradient
            // regardless of batch size, since updates are sparse per row.
            const double step = config.learning_rate;
            for (const auto& [key, values] : grad.rows) {
                auto row = mutable_row(table_ref(m, key.first), key.second, m.dim);
                for (std::size_t i = 0; i < m.dim; ++i) row[i] -= step * values[i];
                if (m.kind == ModelKind::transe && key.first == kEntityRe) normalize(row);
            }
        }
        result.epoch_loss.push_back(pairs_total ? loss_sum / static_cast<double>(pairs_total) : 0.0);
    }
    return result;
}

double grad_check(ModelKind kind, std::uint64_t seed, std::size_t probes, double epsilon) {
    constexpr std::size_t kEntities = 6;
    constexpr std::size_t kRelations = 3;
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t probe = 0; probe < probes; ++probe) {
        TrainConfig cfg;
        cfg.dim = 2 + rng.uniform_index(7);
        cfg.seed = rng.next();
        cfg.margin = rng.uniform(0.5, 2.0);
        cfg.l2 = rng.uniform(0.0, 0.1);
        BaselineModel m = init_model(kind, kEntities, kRelations, cfg);
        // Move TransE off the unit sphere so the probe is not a special case,
        // and shrink the bilinear models out of the saturated logistic range
        // where the loss is flat and differences are pure roundoff.
        if (kind == ModelKind::transe) {
            for (double& v : m.entity_re) v *= rng.uniform(0.5, 1.5);
        } else {
            for (auto* table : {&m.entity_re, &m.entity_im, &m.relation_re, &m.relation_im}) {
                for (double& v : *table) v *= 0.3;
            }
        }

        auto random_triple = [&] {
            return Triple{static_cast<NodeId>(rng.uniform_index(kEntities)),
                          static_cast<RelationId>(rng.uniform_index(kRelations)),
                          static_cast<NodeId>(rng.uniform_index(kEntities))};
        };
        Triple pos{}, neg{};
        // TransE probes must sit inside the hinge and away from its kink.
        for (int attempt = 0;; ++attempt) {
            pos = random_triple();
            neg = random_triple();
            if (kind != ModelKind::transe) break;
            const double sp = score_triple(m, pos.head, pos.relation, pos.tail);
            const double sn = score_triple(m, neg.head, neg.relation, neg.tail);
            const double slack = m.config.margin + sn - sp;
            if (slack > 1e-3 && sp < -1e-3 && sn < -1e-3) break;
            if (attempt > 1000) throw std::runtime_error("grad_check could not draw an active probe");
        }

        Gradient grad;
        accumulate_pair_gradient(m, pos, neg, grad);
        for (const auto& [key, analytic] : grad.rows) {
            auto& table = table_ref(m, key.first);
            for (std::size_t i = 0; i < m.dim; ++i) {
                double& param = table[key.second * m.dim + i];
                const double saved = param;
                param = saved + epsilon;
                const double up = pair_loss(m, pos, neg);
                param = saved - epsilon;
                const double down = pair_loss(m, pos, neg);
                param = saved;
                const double numeric = (up - down) / (2.0 * epsilon);
                const double diff = std::abs(analytic[i] - numeric);
                // below 1e-6 both sides are within central-difference roundoff
                const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
                worst = std::max(worst, diff / denom);
            }
        }
    }
    return worst;
}

double endpoint_score(const BaselineModel& m, const PathInstance& instance) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m.relation_count; ++r) {
        best = std::max(best,
                        score_triple(m, instance.first(), static_cast<RelationId>(r), instance.last()));
    }
    return best;
}

bool predict_link(const BaselineModel& m, const PathInstance& instance, double threshold) {
    return endpoint_score(m, instance) >= threshold;
}

double calibrate_threshold(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("scores and labels differ in length");
    }
    if (scores.empty()) throw std::invalid_argument("cannot calibrate on an empty validation set");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b];
    });

    std::size_t positives = 0;
    for (Label l : labels) positives += l == Label::positive ? 1 : 0;
    std::size_t tp = positives;
    std::size_t fp = labels.size() - positives;
    auto f1 = [&] {
        const std::size_t fn = positives - tp;
        const std::size_t denom = 2 * tp + fp + fn;
        return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    };

    // Everything predicted yes at the lowest score.
    double best_threshold = scores[order.front()];
    double best_f1 = f1();
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]] == Label::positive) {
                --tp;
            } else {
                --fp;
            }
            ++i;
        }
        const double value = f1();
        if (value > best_f1) {
            best_f1 = value;
            best_threshold = std::nextafter(s, std::numeric_limits<double>::infinity());
        }
    }
    return best_threshold;
}

double calibrate_threshold(const BaselineModel& model, std::span<const PathInstance> validation) {
    std::vector<double> scores;
    std::vector<Label> labels;
    for (const auto& inst : validation) {
        scores.push_back(endpoint_score(model, inst));
        labels.push_back(inst.label);
    }
    return calibrate_threshold(scores, labels);
}

void save_checkpoint(const BaselineModel& m, const std::filesystem::path& prefix) {
    std::filesystem::path header_path = prefix;
    header_path += ".header";
    std::filesystem::path bin_path = prefix;
    bin_path += ".bin";

    std::ofstream header(header_path);
    if (!header) throw CheckpointError(fmt::format("cannot write {}", header_path.string()));
    header << "kind=" << to_string(m.kind) << '\n'
           << "entities=" << m.entity_count << '\n'
           << "relations=" << m.relation_count << '\n'
           << "dim=" << m.dim << '\n'
           << "seed=" << m.config.seed << '\n'
           << "epochs=" << m.config.epochs << '\n'
           << "learning_rate=" << fmt::format("{:.17g}", m.config.learning_rate) << '\n'
           << "margin=" << fmt::format("{:.17g}", m.config.margin) << '\n'
           << "l2=" << fmt::format("{:.17g}", m.config.l2) << '\n'
           << "negatives_per_positive=" << m.config.negatives_per_positive << '\n'
           << "batch_size=" << m.config.batch_size << '\n';

    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw CheckpointError(fmt::format("cannot write {}", bin_path.string()));
    for (const auto* table : {&m.entity_re, &m.entity_im, &m.relation_re, &m.relation_im}) {
        bin.write(reinterpret_cast<const char*>(table->data()),
                  static_cast<std::streamsize>(table->size() * sizeof(double)));
    }
    if (!bin) throw CheckpointError(fmt::format("failed writing {}", bin_path.string()));
}

BaselineModel load_checkpoint(const std::filesystem::path& prefix) {
    std::filesystem::path header_path = prefix;
    header_path += ".header";
    std::filesystem::path bin_path = prefix;
    bin_path += ".bin";

    std::ifstream header(header_path);
    if (!header) throw CheckpointError(fmt::format("cannot read {}", header_path.string()));
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(header, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw CheckpointError(fmt::format("{}: missing '{}'", header_path.string(), key));
        }
        return it->second;
    };

    BaselineModel m;
    try {
        auto kind = parse_model_kind(get("kind"));
        if (!kind) throw CheckpointError(fmt::format("unknown model kind '{}'", get("kind")));
        m.kind = *kind;
        m.entity_count = std::stoull(get("entities"));
        m.relation_count = std::stoull(get("relations"));
        m.dim = std::stoull(get("dim"));
        m.config.dim = m.dim;
        m.config.seed = std::stoull(get("seed"));
        m.config.epochs = std::stoull(get("epochs"));
        m.config.learning_rate = std::stod(get("learning_rate"));
        m.config.margin = std::stod(get("margin"));
        m.config.l2 = std::stod(get("l2"));
        m.config.negatives_per_positive = std::stoull(get("negatives_per_positive"));
        m.config.batch_size = std::stoull(get("batch_size"));
    } catch (const std::logic_error& e) {
        throw CheckpointError(fmt::format("{}: bad header value ({})", header_path.string(), e.what()));
    }

    const bool imag = m.kind == ModelKind::complex;
    m.entity_re.resize(m.entity_count * m.dim);
    m.relation_re.resize(m.relation_count * m.dim);
    if (imag) {
        m.entity_im.resize(m.entity_count * m.dim);
        m.relation_im.resize(m.relation_count * m.dim);
    }
    const std::uintmax_t expected =
        (m.entity_re.size() + m.entity_im.size() + m.relation_re.size() + m.relation_im.size()) *
        sizeof(double);
    std::error_code ec;
    const auto actual = std::filesystem::file_size(bin_path, ec);
    if (ec || actual != expected) {
        throw CheckpointError(fmt::format("{}: expected {} bytes of embeddings", bin_path.string(),
                                          expected));
    }
    std::ifstream bin(bin_path, std::ios::binary);
    for (auto* table : {&m.entity_re, &m.entity_im, &m.relation_re, &m.relation_im}) {
        bin.read(reinterpret_cast<char*>(table->data()),
                 static_cast<std::streamsize>(table->size() * sizeof(double)));
    }
    if (!bin) throw CheckpointError(fmt::format("failed reading {}", bin_path.string()));
    for (const auto* table : {&m.entity_re, &m.entity_im, &m.relation_re, &m.relation_im}) {
        if (!std::all_of(table->begin(), table->end(), [](double v) { return std::isfinite(v); })) {
            throw CheckpointError(fmt::format("{}: non-finite embedding value", bin_path.string()));
        }
    }
    return m;
}

}  // namespace kgllm
