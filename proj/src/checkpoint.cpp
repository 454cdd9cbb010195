#include "ihan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "ihan/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace ihan {

namespace {

constexpr char kMagic[8] = {'I', 'H', 'A', 'N', 'C', 'K', 'P', 'T'};

std::string utc_now_iso() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[24];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json config_to_json(const TrainConfig& c) {
    std::vector<std::string> types;
    for (CodeType t : c.active_types) types.emplace_back(to_string(t));
    return nlohmann::json{{"mode", to_string(c.mode)},
                          {"active_types", types},
                          {"embedding_dim", c.embedding_dim},
                          {"hidden_dim", c.hidden_dim},
                          {"learning_rate", c.learning_rate},
                          {"weight_decay", c.weight_decay},
                          {"embedding_weight_decay", c.embedding_weight_decay},
                          {"batch_size", c.batch_size},
                          {"max_epochs", c.max_epochs},
                          {"patience", c.patience},
                          {"clip_norm", c.clip_norm},
                          {"vocab_min_count", c.vocab_min_count},
                          {"seed", c.seed}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    auto mode = fusion_mode_from_string(j.at("mode").get<std::string>());
    if (!mode) throw ParseError("checkpoint: unknown mode '" + j.at("mode").get<std::string>() + "'");
    c.mode = *mode;
    c.active_types.clear();
    for (const auto& t : j.at("active_types")) {
        auto ct = code_type_from_string(t.get<std::string>());
        if (!ct) throw ParseError("checkpoint: unknown code type '" + t.get<std::string>() + "'");
        c.active_types.push_back(*ct);
    }
    c.embedding_dim = j.at("embedding_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.embedding_weight_decay = j.at("embedding_weight_decay").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.patience = j.at("patience").get<int>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.vocab_min_count = j.at("vocab_min_count").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

} // namespace

void save_checkpoint(const std::string& path, const TrainedModel& model,
                     const CheckpointMetrics& metrics) {
    nlohmann::json vocabs = nlohmann::json::array();
    for (const Vocabulary& v : model.vocabs.vocabs) {
        vocabs.push_back(nlohmann::json{
            {"type", v.type() ? to_string(*v.type()) : "shared"},
            {"min_count", v.min_count()},
            {"codes", v.codes()}});
    }

    nlohmann::json manifest = nlohmann::json::array();
    std::vector<const Tensor*> payload;
    visit_params(model.params, [&](const std::string& name, const Tensor& t) {
        manifest.push_back(nlohmann::json{{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
        payload.push_back(&t);
    });

    nlohmann::json header{{"format_version", kCheckpointFormatVersion},
                          {"created_at", utc_now_iso()},
                          {"train_config", config_to_json(model.config)},
                          {"vocabs", std::move(vocabs)},
                          {"tensors", std::move(manifest)},
                          {"metrics", nlohmann::json{{"test_auc", metrics.test_auc},
                                                     {"best_epoch", metrics.best_epoch},
                                                     {"best_valid_loss", metrics.best_valid_loss}}}};
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kCheckpointFormatVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const Tensor* t : payload) {
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(sizeof(double) * t->size()));
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw ParseError("'" + path + "' is not a checkpoint file");
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (version != kCheckpointFormatVersion) {
        throw ParseError("checkpoint format version " + std::to_string(version) +
                         " unsupported; this build reads version " +
                         std::to_string(kCheckpointFormatVersion));
    }
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw ParseError("checkpoint '" + path + "' is truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint header: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    ckpt.format_version = header.at("format_version").get<int>();
    ckpt.created_at = header.at("created_at").get<std::string>();
    ckpt.model.config = config_from_json(header.at("train_config"));
    const auto& metrics = header.at("metrics");
    ckpt.metrics.test_auc = metrics.at("test_auc").get<double>();
    ckpt.metrics.best_epoch = metrics.at("best_epoch").get<int>();
    ckpt.metrics.best_valid_loss = metrics.at("best_valid_loss").get<double>();

    VocabSet& vs = ckpt.model.vocabs;
    vs.mode = ckpt.model.config.mode;
    vs.active_types = ckpt.model.config.active_types;
    for (const auto& jv : header.at("vocabs")) {
        const std::string type_str = jv.at("type").get<std::string>();
        std::optional<CodeType> type;
        if (type_str != "shared") {
            type = code_type_from_string(type_str);
            if (!type) throw ParseError("checkpoint: unknown vocab type '" + type_str + "'");
        }
        vs.vocabs.push_back(Vocabulary::from_parts(type, jv.at("codes").get<std::vector<std::string>>(),
                                                   jv.at("min_count").get<int>()));
    }

    IhanParams& p = ckpt.model.params;
    p.mode = ckpt.model.config.mode;
    p.active_types = ckpt.model.config.active_types;
    p.encoders.resize(vs.vocabs.size());

    const auto& manifest = header.at("tensors");
    std::size_t next = 0;
    visit_params(p, [&](const std::string& name, Tensor& t) {
        if (next >= manifest.size()) {
            throw ConsistencyError("checkpoint: manifest too short at '" + name + "'");
        }
        const auto& entry = manifest[next++];
        if (entry.at("name").get<std::string>() != name) {
            throw ConsistencyError("checkpoint: expected tensor '" + name + "', manifest has '" +
                                   entry.at("name").get<std::string>() + "'");
        }
        t = Tensor(entry.at("rows").get<int>(), entry.at("cols").get<int>());
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(double) * t.size()));
    });
    if (next != manifest.size()) {
        throw ConsistencyError("checkpoint: manifest has unread entries");
    }
    if (!in) throw ParseError("checkpoint '" + path + "' is truncated");
    return ckpt;
}

} // namespace ihan
