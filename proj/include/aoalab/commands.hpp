// Command layer: every subcommand of the pipeline tool as a plain function
// that reads and writes files under a run directory.  Keeping these in the
// library makes each one testable in-process and leaves the binary itself a
// thin argument parser.
//
// Two conventions hold throughout:
//   * each command re-writes resolved_config.json before the heavy work, so
//     a run directory always records the configuration that produced it;
//   * wall-clock fields are zeroed before anything is persisted, making the
//     on-disk artifacts a pure function of configuration and seed.

#pragma once

#include <aoalab/augment.hpp>
#include <aoalab/channel.hpp>
#include <aoalab/features.hpp>
#include <aoalab/fewshot.hpp>
#include <aoalab/offline.hpp>
#include <aoalab/stream.hpp>

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace aoalab {

// ---------------------------------------------------------------------------
// small file and formatting helpers

namespace detail {

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("short write on " + path);
}

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

inline std::string lower_copy(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return s;
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline void require_keys(const nlohmann::ordered_json& j,
                         std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// experiment configuration
//
// One document describes a whole experiment; the output directory is an
// invocation detail and deliberately not part of it, so that the same
// configuration writes byte-identical artifacts wherever it lands.

struct ExperimentConfig {
    std::uint64_t seed = 1;
    ArrayGeometry geometry{};
    std::vector<TrackSpec> tracks{};  // empty: the default campaign at resolve time
    std::size_t snapshots = 24000;    // track length; individual tracks may override
    std::size_t window_size = 2000;
    double shift_ratio = 0.5;
    std::size_t num_sources = 1;
    std::string estimator = "music";     // music | esprit | both
    std::string label_mode = "track";    // track | region
    std::string region_filter = "all";   // all | los | nlos
    ModelKind classifier_kind = ModelKind::RF;
    ClassifierConfig classifier{};
    std::string stream_learner = "all";  // all, or one canonical learner name
    double warmup_fraction = 0.10;
    double tau = 0.5;
    StreamLearnerConfig stream_config{};
    std::size_t fewshot_way = 3;
    std::size_t fewshot_shot = 1;
    std::size_t fewshot_query = 3;
    std::size_t fewshot_steps = 5;
    std::size_t meta_train_episodes = 1000;
    std::size_t meta_test_episodes = 200;
    ProtoNetConfig protonet{};  // input width is always taken from the data
    CvaeConfig cvae{};          // feature width is always taken from the data
};

inline nlohmann::ordered_json experiment_to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["snapshots"] = cfg.snapshots;
    j["estimator"] = cfg.estimator;
    j["label_mode"] = cfg.label_mode;
    j["region_filter"] = cfg.region_filter;

    nlohmann::ordered_json g;
    g["rows"] = cfg.geometry.rows;
    g["cols"] = cfg.geometry.cols;
    g["horizontal_spacing"] = cfg.geometry.horizontal_spacing;
    g["vertical_spacing"] = cfg.geometry.vertical_spacing;
    g["carrier_hz"] = cfg.geometry.carrier_hz;
    g["subcarriers"] = cfg.geometry.subcarriers;
    g["bandwidth_hz"] = cfg.geometry.bandwidth_hz;
    j["geometry"] = g;

    nlohmann::ordered_json tracks = nlohmann::ordered_json::array();
    for (const auto& t : cfg.tracks) {
        nlohmann::ordered_json e;
        e["track_id"] = t.track_id;
        e["region"] = region_name(t.region);
        e["snapshots"] = t.snapshots;
        e["base_azimuth"] = t.base_azimuth;
        e["azimuth_drift"] = t.azimuth_drift;
        e["rician_k_db"] = t.rician_k_db;
        e["multipath_count"] = t.multipath_count;
        e["snr_db"] = t.snr_db;
        tracks.push_back(e);
    }
    j["tracks"] = tracks;

    nlohmann::ordered_json w;
    w["size"] = cfg.window_size;
    w["shift_ratio"] = cfg.shift_ratio;
    w["num_sources"] = cfg.num_sources;
    j["window"] = w;

    nlohmann::ordered_json c;
    c["kind"] = model_kind_name(cfg.classifier_kind);
    for (const auto& item : cfg.classifier.to_json().items()) c[item.key()] = item.value();
    j["classifier"] = c;

    nlohmann::ordered_json s;
    s["learner"] = cfg.stream_learner;
    s["warmup_fraction"] = cfg.warmup_fraction;
    s["tau"] = cfg.tau;
    s["grace_period"] = cfg.stream_config.grace_period;
    s["split_delta"] = cfg.stream_config.split_delta;
    s["tie_threshold"] = cfg.stream_config.tie_threshold;
    s["split_candidates"] = cfg.stream_config.split_candidates;
    s["ensemble_size"] = cfg.stream_config.ensemble_size;
    s["adwin_delta"] = cfg.stream_config.adwin_delta;
    s["warning_delta"] = cfg.stream_config.warning_delta;
    s["poisson_lambda"] = cfg.stream_config.poisson_lambda;
    s["patch_fraction"] = cfg.stream_config.patch_fraction;
    s["amf_step"] = cfg.stream_config.amf_step;
    s["amf_dirichlet"] = cfg.stream_config.amf_dirichlet;
    s["amf_aggregation"] = cfg.stream_config.amf_aggregation;
    s["variance_floor"] = cfg.stream_config.variance_floor;
    j["stream"] = s;

    nlohmann::ordered_json f;
    f["way"] = cfg.fewshot_way;
    f["shot"] = cfg.fewshot_shot;
    f["query"] = cfg.fewshot_query;
    f["steps_per_episode"] = cfg.fewshot_steps;
    f["train_episodes"] = cfg.meta_train_episodes;
    f["test_episodes"] = cfg.meta_test_episodes;
    f["hidden"] = cfg.protonet.hidden;
    f["embed_dim"] = cfg.protonet.embed_dim;
    f["dropout"] = cfg.protonet.dropout;
    f["batchnorm"] = cfg.protonet.batchnorm;
    f["lr"] = cfg.protonet.lr;
    j["fewshot"] = f;

    nlohmann::ordered_json v;
    v["latent_dim"] = cfg.cvae.latent_dim;
    v["condition_dim"] = cfg.cvae.condition_dim;
    v["encoder_hidden"] = cfg.cvae.encoder_hidden;
    v["decoder_hidden"] = cfg.cvae.decoder_hidden;
    v["beta"] = cfg.cvae.beta;
    v["epochs"] = cfg.cvae.epochs;
    v["batch"] = cfg.cvae.batch;
    v["lr"] = cfg.cvae.lr;
    v["validation_fraction"] = cfg.cvae.validation_fraction;
    j["cvae"] = v;
    return j;
}

inline ExperimentConfig experiment_from_json(const nlohmann::ordered_json& j) {
    try {
        ExperimentConfig cfg;
        detail::require_keys(j,
                             {"seed", "snapshots", "estimator", "label_mode", "region_filter",
                              "geometry", "tracks", "window", "classifier", "stream", "fewshot",
                              "cvae"},
                             "the configuration root");
        cfg.seed = j.value("seed", cfg.seed);
        cfg.snapshots = j.value("snapshots", cfg.snapshots);
        cfg.estimator = j.value("estimator", cfg.estimator);
        if (cfg.estimator != "music" && cfg.estimator != "esprit" && cfg.estimator != "both")
            throw ConfigError("estimator must be music, esprit, or both (got '" + cfg.estimator +
                              "')");
        cfg.label_mode = j.value("label_mode", cfg.label_mode);
        if (cfg.label_mode != "track" && cfg.label_mode != "region")
            throw ConfigError("label_mode must be track or region (got '" + cfg.label_mode + "')");
        cfg.region_filter = j.value("region_filter", cfg.region_filter);
        if (cfg.region_filter != "all" && cfg.region_filter != "los" &&
            cfg.region_filter != "nlos")
            throw ConfigError("region_filter must be all, los, or nlos (got '" +
                              cfg.region_filter + "')");

        if (j.contains("geometry")) {
            const auto& g = j.at("geometry");
            detail::require_keys(g,
                                 {"rows", "cols", "horizontal_spacing", "vertical_spacing",
                                  "carrier_hz", "subcarriers", "bandwidth_hz"},
                                 "geometry");
            cfg.geometry.rows = g.value("rows", cfg.geometry.rows);
            cfg.geometry.cols = g.value("cols", cfg.geometry.cols);
            cfg.geometry.horizontal_spacing =
                g.value("horizontal_spacing", cfg.geometry.horizontal_spacing);
            cfg.geometry.vertical_spacing =
                g.value("vertical_spacing", cfg.geometry.vertical_spacing);
            cfg.geometry.carrier_hz = g.value("carrier_hz", cfg.geometry.carrier_hz);
            cfg.geometry.subcarriers = g.value("subcarriers", cfg.geometry.subcarriers);
            cfg.geometry.bandwidth_hz = g.value("bandwidth_hz", cfg.geometry.bandwidth_hz);
        }

        if (j.contains("tracks")) {
            if (!j.at("tracks").is_array()) throw ConfigError("tracks must be an array");
            cfg.tracks.clear();
            for (const auto& e : j.at("tracks")) {
                detail::require_keys(e,
                                     {"track_id", "region", "snapshots", "base_azimuth",
                                      "azimuth_drift", "rician_k_db", "multipath_count", "snr_db"},
                                     "a track entry");
                TrackSpec t;
                t.track_id = e.value("track_id", t.track_id);
                if (e.contains("region"))
                    t.region = region_from_name(e.at("region").get<std::string>());
                t.snapshots = e.value("snapshots", std::size_t{0});  // 0: inherit the top level
                t.base_azimuth = e.value("base_azimuth", t.base_azimuth);
                t.azimuth_drift = e.value("azimuth_drift", t.azimuth_drift);
                t.rician_k_db = e.value("rician_k_db", t.rician_k_db);
                t.multipath_count = e.value("multipath_count", t.multipath_count);
                t.snr_db = e.value("snr_db", t.snr_db);
                cfg.tracks.push_back(t);
            }
        }

        if (j.contains("window")) {
            const auto& w = j.at("window");
            detail::require_keys(w, {"size", "shift_ratio", "num_sources"}, "window");
            cfg.window_size = w.value("size", cfg.window_size);
            cfg.shift_ratio = w.value("shift_ratio", cfg.shift_ratio);
            cfg.num_sources = w.value("num_sources", cfg.num_sources);
        }

        if (j.contains("classifier")) {
            const auto& c = j.at("classifier");
            detail::require_keys(c,
                                 {"kind", "lr_c", "knn_k", "knn_distance_weights", "n_estimators",
                                  "max_depth", "max_features", "min_samples_split",
                                  "min_samples_leaf", "gbm_learning_rate", "gbm_subsample"},
                                 "classifier");
            if (c.contains("kind"))
                cfg.classifier_kind = model_kind_from_name(c.at("kind").get<std::string>());
            cfg.classifier = ClassifierConfig::from_json(c);
        }

        if (j.contains("stream")) {
            const auto& s = j.at("stream");
            detail::require_keys(s,
                                 {"learner", "warmup_fraction", "tau", "grace_period",
                                  "split_delta", "tie_threshold", "split_candidates",
                                  "ensemble_size", "adwin_delta", "warning_delta",
                                  "poisson_lambda", "patch_fraction", "amf_step", "amf_dirichlet",
                                  "amf_aggregation", "variance_floor"},
                                 "stream");
            if (s.contains("learner")) {
                const auto name = s.at("learner").get<std::string>();
                if (name != "all") stream_kind_from_name(name);  // validate only
                cfg.stream_learner = name;
            }
            cfg.warmup_fraction = s.value("warmup_fraction", cfg.warmup_fraction);
            cfg.tau = s.value("tau", cfg.tau);
            auto& lc = cfg.stream_config;
            lc.grace_period = s.value("grace_period", lc.grace_period);
            lc.split_delta = s.value("split_delta", lc.split_delta);
            lc.tie_threshold = s.value("tie_threshold", lc.tie_threshold);
            lc.split_candidates = s.value("split_candidates", lc.split_candidates);
            lc.ensemble_size = s.value("ensemble_size", lc.ensemble_size);
            lc.adwin_delta = s.value("adwin_delta", lc.adwin_delta);
            lc.warning_delta = s.value("warning_delta", lc.warning_delta);
            lc.poisson_lambda = s.value("poisson_lambda", lc.poisson_lambda);
            lc.patch_fraction = s.value("patch_fraction", lc.patch_fraction);
            lc.amf_step = s.value("amf_step", lc.amf_step);
            lc.amf_dirichlet = s.value("amf_dirichlet", lc.amf_dirichlet);
            lc.amf_aggregation = s.value("amf_aggregation", lc.amf_aggregation);
            lc.variance_floor = s.value("variance_floor", lc.variance_floor);
        }

        if (j.contains("fewshot")) {
            const auto& f = j.at("fewshot");
            detail::require_keys(f,
                                 {"way", "shot", "query", "steps_per_episode", "train_episodes",
                                  "test_episodes", "hidden", "embed_dim", "dropout", "batchnorm",
                                  "lr"},
                                 "fewshot");
            cfg.fewshot_way = f.value("way", cfg.fewshot_way);
            cfg.fewshot_shot = f.value("shot", cfg.fewshot_shot);
            cfg.fewshot_query = f.value("query", cfg.fewshot_query);
            cfg.fewshot_steps = f.value("steps_per_episode", cfg.fewshot_steps);
            cfg.meta_train_episodes = f.value("train_episodes", cfg.meta_train_episodes);
            cfg.meta_test_episodes = f.value("test_episodes", cfg.meta_test_episodes);
            cfg.protonet.hidden = f.value("hidden", cfg.protonet.hidden);
            cfg.protonet.embed_dim = f.value("embed_dim", cfg.protonet.embed_dim);
            cfg.protonet.dropout = f.value("dropout", cfg.protonet.dropout);
            cfg.protonet.batchnorm = f.value("batchnorm", cfg.protonet.batchnorm);
            cfg.protonet.lr = f.value("lr", cfg.protonet.lr);
        }

        if (j.contains("cvae")) {
            const auto& v = j.at("cvae");
            detail::require_keys(v,
                                 {"latent_dim", "condition_dim", "encoder_hidden",
                                  "decoder_hidden", "beta", "epochs", "batch", "lr",
                                  "validation_fraction"},
                                 "cvae");
            cfg.cvae.latent_dim = v.value("latent_dim", cfg.cvae.latent_dim);
            cfg.cvae.condition_dim = v.value("condition_dim", cfg.cvae.condition_dim);
            cfg.cvae.encoder_hidden = v.value("encoder_hidden", cfg.cvae.encoder_hidden);
            cfg.cvae.decoder_hidden = v.value("decoder_hidden", cfg.cvae.decoder_hidden);
            cfg.cvae.beta = v.value("beta", cfg.cvae.beta);
            cfg.cvae.epochs = v.value("epochs", cfg.cvae.epochs);
            cfg.cvae.batch = v.value("batch", cfg.cvae.batch);
            cfg.cvae.lr = v.value("lr", cfg.cvae.lr);
            cfg.cvae.validation_fraction =
                v.value("validation_fraction", cfg.cvae.validation_fraction);
        }
        return cfg;
    } catch (const ConfigError&) {
        throw;
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("configuration value: ") + e.what());
    }
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    const std::string text = detail::read_text(path);
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("cannot parse " + path + ": " + e.what());
    }
    return experiment_from_json(doc);
}

// Fill everything a command needs that the user may have left implicit.
inline ExperimentConfig resolve_experiment(ExperimentConfig cfg) {
    if (cfg.tracks.empty()) cfg.tracks = default_campaign_plan(cfg.snapshots).tracks;
    for (auto& t : cfg.tracks)
        if (t.snapshots == 0) t.snapshots = cfg.snapshots;
    return cfg;
}

inline std::string default_output_root() {
    const char* env = std::getenv("AOALAB_OUTPUT_ROOT");
    return env && *env ? env : "runs";
}

// Process exit codes: 0 success, 2 configuration, 3 data and file IO,
// 4 numerical failure, 1 anything unexpected.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    if (dynamic_cast<const IoError*>(&e)) return 3;
    if (dynamic_cast<const Error*>(&e)) return 2;
    return 1;
}

// ---------------------------------------------------------------------------
// persistence helpers

namespace detail {

inline void persist_config(const ExperimentConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/resolved_config.json", json_text(experiment_to_json(cfg)));
}

inline StreamLog without_timing(StreamLog log) {
    for (auto& rec : log) {
        rec.infer_ms = 0.0;
        rec.update_ms = 0.0;
    }
    return log;
}

inline StreamReport without_timing(StreamReport report) {
    report.infer_ms_mean = 0.0;
    report.infer_ms_total = 0.0;
    report.update_ms_mean = 0.0;
    report.update_ms_total = 0.0;
    return report;
}

inline EvalReport without_timing(EvalReport report) {
    report.train_seconds = 0.0;
    report.infer_ms_mean = 0.0;
    return report;
}

// Accept feature tables with or without the provenance column.
inline std::vector<AoaSample> read_features_any(const std::string& path) {
    try {
        return read_augmented_csv(path);
    } catch (const FormatError&) {
        return read_features_csv(path);
    }
}

inline Dataset labeled_dataset(const std::vector<AoaSample>& samples,
                               const ExperimentConfig& cfg) {
    std::vector<AoaSample> kept;
    for (const auto& s : samples) {
        if (!s.valid) continue;
        if (cfg.region_filter == "los" && s.region != Region::LoS) continue;
        if (cfg.region_filter == "nlos" && s.region != Region::NLoS) continue;
        kept.push_back(s);
    }
    if (kept.empty()) throw TooFewSamples("no usable feature rows after filtering");
    return cfg.label_mode == "region" ? make_region_dataset(kept) : make_track_dataset(kept);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// generator artifact (same envelope as the classifier artifacts)

struct CvaeArtifact {
    CvaeModel model;
    std::uint64_t seed = 0;
    std::string data_fingerprint;
};

inline std::string cvae_to_bytes(const CvaeArtifact& art) {
    const CvaeConfig& cfg = art.model.config();
    nlohmann::ordered_json j;
    j["format"] = kModelFormatTag;
    j["kind"] = "cvae";
    j["seed"] = art.seed;
    j["data_fingerprint"] = art.data_fingerprint;
    nlohmann::ordered_json c;
    c["feature_dim"] = cfg.feature_dim;
    c["condition_dim"] = cfg.condition_dim;
    c["latent_dim"] = cfg.latent_dim;
    c["encoder_hidden"] = cfg.encoder_hidden;
    c["decoder_hidden"] = cfg.decoder_hidden;
    c["beta"] = cfg.beta;
    c["epochs"] = cfg.epochs;
    c["batch"] = cfg.batch;
    c["lr"] = cfg.lr;
    c["validation_fraction"] = cfg.validation_fraction;
    j["config"] = c;
    nlohmann::ordered_json p;
    p["classes"] = art.model.classes();
    p["feature_mean"] = detail::hex_from_doubles(art.model.feature_mean());
    p["feature_scale"] = detail::hex_from_doubles(art.model.feature_scale());
    p["trunk"] = detail::hex_from_doubles(art.model.trunk().params());
    p["mu_head"] = detail::hex_from_doubles(art.model.mu_head().params());
    p["logvar_head"] = detail::hex_from_doubles(art.model.logvar_head().params());
    p["decoder"] = detail::hex_from_doubles(art.model.decoder().params());
    j["payload"] = p;
    return detail::json_text(j);
}

inline CvaeArtifact cvae_from_bytes(const std::string& bytes) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("generator artifact: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != kModelFormatTag)
            throw FormatError("unrecognized artifact format tag");
        const auto kind = doc.at("kind").get<std::string>();
        if (kind != "cvae") throw KindMismatch("expected a cvae artifact, found '" + kind + "'");
        const auto& c = doc.at("config");
        CvaeConfig cfg;
        cfg.feature_dim = c.at("feature_dim").get<std::size_t>();
        cfg.condition_dim = c.at("condition_dim").get<std::size_t>();
        cfg.latent_dim = c.at("latent_dim").get<std::size_t>();
        cfg.encoder_hidden = c.at("encoder_hidden").get<std::vector<std::size_t>>();
        cfg.decoder_hidden = c.at("decoder_hidden").get<std::vector<std::size_t>>();
        cfg.beta = c.at("beta").get<double>();
        cfg.epochs = c.at("epochs").get<std::size_t>();
        cfg.batch = c.at("batch").get<std::size_t>();
        cfg.lr = c.at("lr").get<double>();
        cfg.validation_fraction = c.at("validation_fraction").get<double>();
        const auto& p = doc.at("payload");
        CvaeArtifact art{CvaeModel(cfg, p.at("classes").get<std::vector<int>>(), 0),
                         doc.at("seed").get<std::uint64_t>(),
                         doc.at("data_fingerprint").get<std::string>()};
        const auto load_block = [&p](const char* key, Mlp& net) {
            auto values = detail::doubles_from_hex(p.at(key).get<std::string>());
            if (values.size() != net.param_count())
                throw FormatError(std::string("parameter block '") + key +
                                  "' has the wrong size");
            net.mutable_params() = std::move(values);
        };
        load_block("trunk", art.model.trunk());
        load_block("mu_head", art.model.mu_head());
        load_block("logvar_head", art.model.logvar_head());
        load_block("decoder", art.model.decoder());
        art.model.set_standardization(
            detail::doubles_from_hex(p.at("feature_mean").get<std::string>()),
            detail::doubles_from_hex(p.at("feature_scale").get<std::string>()));
        return art;
    } catch (const Error&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("generator artifact: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateResult {
    std::vector<std::string> csi_paths;
};

inline SimulateResult cmd_simulate(const ExperimentConfig& user_cfg, const std::string& out_dir) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    for (const auto& t : cfg.tracks)
        if (cfg.window_size > t.snapshots)
            throw InvalidArgument(
                "track " + std::to_string(t.track_id) + ": the " +
                std::to_string(cfg.window_size) + "-snapshot analysis window does not fit a " +
                std::to_string(t.snapshots) +
                "-snapshot track; shrink window.size or raise snapshots");
    detail::persist_config(cfg, out_dir);
    std::filesystem::create_directories(out_dir + "/csi");
    SimulateResult out;
    for (const auto& t : cfg.tracks) {
        const std::uint64_t seed =
            seed_for(cfg.seed, "channel/track/" + std::to_string(t.track_id));
        const CsiTensor tensor = generate_track(cfg.geometry, t, seed);
        char name[40];
        std::snprintf(name, sizeof(name), "/csi/track_%02d.bin", t.track_id);
        const std::string path = out_dir + name;
        write_csi(path, tensor, seed);
        out.csi_paths.push_back(path);
    }
    return out;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractResult {
    std::vector<std::string> csv_paths;   // one per requested estimator
    std::vector<std::size_t> row_counts;  // parallel to csv_paths
};

inline ExtractResult cmd_extract(const ExperimentConfig& user_cfg, const std::string& out_dir,
                                 std::vector<std::string> csi_paths = {}) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    if (csi_paths.empty()) {
        const std::string csi_dir = out_dir + "/csi";
        if (!std::filesystem::is_directory(csi_dir))
            throw IoError("no channel directory at " + csi_dir + "; run the simulator first");
        for (const auto& entry : std::filesystem::directory_iterator(csi_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".bin")
                csi_paths.push_back(entry.path().string());
        std::sort(csi_paths.begin(), csi_paths.end());
        if (csi_paths.empty()) throw IoError("no channel files in " + csi_dir);
    }

    std::vector<Estimator> estimators;
    if (cfg.estimator == "music") estimators = {Estimator::MUSIC};
    else if (cfg.estimator == "esprit") estimators = {Estimator::ESPRIT};
    else estimators = {Estimator::MUSIC, Estimator::ESPRIT};

    std::vector<std::vector<AoaSample>> rows(estimators.size());
    for (const auto& path : csi_paths) {
        const CsiTensor csi = read_csi(path);  // one track in memory at a time
        const WindowPlan plan =
            make_window_plan(cfg.window_size, cfg.shift_ratio, csi.track.snapshots);
        for (std::size_t e = 0; e < estimators.size(); ++e) {
            const auto batch = extract_features(csi, plan, estimators[e], cfg.num_sources);
            rows[e].insert(rows[e].end(), batch.begin(), batch.end());
        }
    }

    ExtractResult out;
    for (std::size_t e = 0; e < estimators.size(); ++e) {
        const std::string path =
            out_dir + "/features_" + detail::lower_copy(estimator_name(estimators[e])) + ".csv";
        write_features_csv(path, rows[e]);
        out.csv_paths.push_back(path);
        out.row_counts.push_back(rows[e].size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// offline: train / eval / tune / retrain-exp

struct OfflineTrainResult {
    std::string model_path;
    std::string report_path;
    std::vector<std::string> stage_paths;  // gate, LoS branch, NLoS branch
    double stage1_accuracy = 0.0;
    double stage2_los_accuracy = 0.0;
    double stage2_nlos_accuracy = 0.0;
};

inline OfflineTrainResult cmd_offline_train(const ExperimentConfig& user_cfg,
                                            const std::string& out_dir,
                                            const std::string& features_csv) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    std::vector<AoaSample> samples;
    for (auto& s : detail::read_features_any(features_csv))
        if (s.valid) samples.push_back(std::move(s));
    if (samples.empty()) throw TooFewSamples("no valid feature rows in " + features_csv);

    std::vector<int> region_labels;
    region_labels.reserve(samples.size());
    for (const auto& s : samples) region_labels.push_back(s.region == Region::LoS ? 0 : 1);
    const SplitIndices split =
        stratified_split(region_labels, 0.2, seed_for(cfg.seed, "offline/holdout"));
    std::vector<AoaSample> train_rows, holdout_rows;
    for (const std::size_t i : split.train) train_rows.push_back(samples[i]);
    for (const std::size_t i : split.holdout) holdout_rows.push_back(samples[i]);

    const auto by_region = [](const std::vector<AoaSample>& rows, Region region) {
        std::vector<AoaSample> picked;
        for (const auto& s : rows)
            if (s.region == region) picked.push_back(s);
        return picked;
    };
    const Dataset los = make_track_dataset(by_region(train_rows, Region::LoS));
    const Dataset nlos = make_track_dataset(by_region(train_rows, Region::NLoS));
    const HierarchicalModel model = train_hierarchical(
        los, nlos, cfg.classifier_kind, cfg.classifier_kind, cfg.classifier_kind,
        seed_for(cfg.seed, "offline/train"), cfg.classifier, cfg.classifier, cfg.classifier);

    const EvalReport stage1 =
        detail::without_timing(evaluate(model.stage1, make_region_dataset(holdout_rows)));
    const EvalReport stage2_los = detail::without_timing(
        evaluate(model.stage2_los, make_track_dataset(by_region(holdout_rows, Region::LoS))));
    const EvalReport stage2_nlos = detail::without_timing(
        evaluate(model.stage2_nlos, make_track_dataset(by_region(holdout_rows, Region::NLoS))));

    OfflineTrainResult out;
    out.model_path = out_dir + "/hierarchical.json";
    detail::write_text(out.model_path, hierarchical_to_bytes(model));
    out.stage_paths = {out_dir + "/stage1.json", out_dir + "/stage2_los.json",
                       out_dir + "/stage2_nlos.json"};
    detail::write_text(out.stage_paths[0], model.stage1.to_bytes());
    detail::write_text(out.stage_paths[1], model.stage2_los.to_bytes());
    detail::write_text(out.stage_paths[2], model.stage2_nlos.to_bytes());

    nlohmann::ordered_json report;
    report["stage1"] = stage1.to_json();
    report["stage2_los"] = stage2_los.to_json();
    report["stage2_nlos"] = stage2_nlos.to_json();
    out.report_path = out_dir + "/offline_report.json";
    detail::write_text(out.report_path, detail::json_text(report));
    out.stage1_accuracy = stage1.accuracy;
    out.stage2_los_accuracy = stage2_los.accuracy;
    out.stage2_nlos_accuracy = stage2_nlos.accuracy;
    return out;
}

struct OfflineEvalResult {
    std::string report_path;
    EvalReport report;
};

inline OfflineEvalResult cmd_offline_eval(const ExperimentConfig& user_cfg,
                                          const std::string& out_dir,
                                          const std::string& model_path,
                                          const std::string& features_csv) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    const ModelArtifact artifact = load_artifact(detail::read_text(model_path));
    const Dataset data = detail::labeled_dataset(detail::read_features_any(features_csv), cfg);
    OfflineEvalResult out;
    out.report = detail::without_timing(evaluate(artifact, data));
    out.report_path = out_dir + "/eval_report.json";
    detail::write_text(out.report_path, detail::json_text(out.report.to_json()));
    return out;
}

struct TuneResult {
    std::string log_csv;
    std::string best_json;
    std::string artifact_path;
    std::size_t trials = 0;
    double best_score = 0.0;
};

inline TuneResult cmd_offline_tune(const ExperimentConfig& user_cfg, const std::string& out_dir,
                                   const std::string& features_csv, std::size_t trials,
                                   std::size_t folds) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    const Dataset data = detail::labeled_dataset(detail::read_features_any(features_csv), cfg);
    const SearchResult search = random_search(cfg.classifier_kind, HyperparamSpace{}, data,
                                              trials, folds, seed_for(cfg.seed, "tune/search"));

    std::string csv =
        "trial,score,lr_c,knn_k,knn_distance_weights,n_estimators,max_depth,max_features,"
        "min_samples_split,min_samples_leaf,gbm_learning_rate,gbm_subsample\n";
    for (std::size_t t = 0; t < search.log.size(); ++t) {
        const ClassifierConfig& c = search.log[t].config;
        csv += std::to_string(t) + ',' + detail::fmt_g(search.log[t].score) + ',' +
               detail::fmt_g(c.lr_c) + ',' + std::to_string(c.knn_k) + ',' +
               (c.knn_distance_weights ? "1" : "0") + ',' + std::to_string(c.n_estimators) + ',' +
               std::to_string(c.max_depth) + ',' + feature_subset_name(c.max_features) + ',' +
               std::to_string(c.min_samples_split) + ',' + std::to_string(c.min_samples_leaf) +
               ',' + detail::fmt_g(c.gbm_learning_rate) + ',' + detail::fmt_g(c.gbm_subsample) +
               '\n';
    }
    TuneResult out;
    out.trials = search.log.size();
    out.best_score = search.best_score;
    out.log_csv = out_dir + "/tune_log.csv";
    detail::write_text(out.log_csv, csv);

    nlohmann::ordered_json best;
    best["kind"] = model_kind_name(cfg.classifier_kind);
    best["trials"] = search.log.size();
    best["folds"] = folds;
    best["best_index"] = search.best_index;
    best["best_score"] = search.best_score;
    best["config"] = search.best_config.to_json();
    out.best_json = out_dir + "/tune_best.json";
    detail::write_text(out.best_json, detail::json_text(best));

    const ModelArtifact tuned = train_classifier(cfg.classifier_kind, data, search.best_config,
                                                 seed_for(cfg.seed, "tune/final"));
    out.artifact_path = out_dir + "/tuned_model.json";
    detail::write_text(out.artifact_path, tuned.to_bytes());
    return out;
}

struct RetrainResult {
    std::string csv_path;
    RetrainCurve buffer;
    RetrainCurve cumulative;
};

inline RetrainResult cmd_offline_retrain(const ExperimentConfig& user_cfg,
                                         const std::string& out_dir,
                                         const std::string& features_csv, std::size_t batches,
                                         std::size_t trials) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    const Dataset data = detail::labeled_dataset(detail::read_features_any(features_csv), cfg);
    const std::uint64_t seed = seed_for(cfg.seed, "retrain/experiment");
    RetrainResult out;
    out.buffer = retraining_experiment(data, cfg.classifier_kind, RetrainStrategy::Buffer,
                                       batches, trials, seed, cfg.classifier);
    out.cumulative = retraining_experiment(data, cfg.classifier_kind, RetrainStrategy::Cumulative,
                                           batches, trials, seed, cfg.classifier);

    std::string csv =
        "batch,buffer_train_size,buffer_mean,buffer_std,cumulative_train_size,cumulative_mean,"
        "cumulative_std\n";
    for (std::size_t b = 0; b < out.buffer.train_sizes.size(); ++b)
        csv += std::to_string(b) + ',' + std::to_string(out.buffer.train_sizes[b]) + ',' +
               detail::fmt_g(out.buffer.mean_accuracy[b]) + ',' +
               detail::fmt_g(out.buffer.stddev_accuracy[b]) + ',' +
               std::to_string(out.cumulative.train_sizes[b]) + ',' +
               detail::fmt_g(out.cumulative.mean_accuracy[b]) + ',' +
               detail::fmt_g(out.cumulative.stddev_accuracy[b]) + '\n';
    out.csv_path = out_dir + "/retrain_curves.csv";
    detail::write_text(out.csv_path, csv);
    return out;
}

// ---------------------------------------------------------------------------
// stream

struct StreamRunResult {
    std::vector<std::string> report_paths;
    std::vector<std::string> log_paths;
    std::string comparison_csv;
};

inline StreamRunResult cmd_stream(const ExperimentConfig& user_cfg, const std::string& out_dir,
                                  const std::string& features_csv) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    const Dataset data = detail::labeled_dataset(detail::read_features_any(features_csv), cfg);

    // Windows arrive grouped by track in the extraction table; a seeded
    // shuffle turns them into an interleaved arrival process.
    std::vector<std::size_t> order(data.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng(seed_for(cfg.seed, "stream/order"));
    order_rng.shuffle(order);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    xs.reserve(order.size());
    ys.reserve(order.size());
    for (const std::size_t i : order) {
        xs.push_back(data.samples[i].features);
        ys.push_back(data.labels[i]);
    }

    std::vector<StreamKind> kinds;
    if (cfg.stream_learner == "all") {
        kinds = {StreamKind::GNB, StreamKind::HT,  StreamKind::HAT,
                 StreamKind::ARF, StreamKind::SRP, StreamKind::AMF};
    } else {
        try {
            kinds = {stream_kind_from_name(cfg.stream_learner)};
        } catch (const FormatError& e) {
            throw ConfigError(e.what());
        }
    }

    StreamConfig run_cfg;
    run_cfg.warmup_fraction = cfg.warmup_fraction;
    run_cfg.tau = cfg.tau;
    run_cfg.seed = seed_for(cfg.seed, "stream/run");

    StreamRunResult out;
    std::string comparison =
        "learner,warmup_accuracy,online_accuracy,acceptance_rate,forgetting_rate\n";
    for (const StreamKind kind : kinds) {
        const std::string name = detail::lower_copy(stream_kind_name(kind));
        auto model = make_stream_model(kind, data.class_space, cfg.stream_config,
                                       seed_for(cfg.seed, "stream/" + name));
        const PrequentialResult run = run_prequential(*model, xs, ys, run_cfg);
        const StreamReport report = detail::without_timing(run.report);

        const std::string log_path = out_dir + "/stream_" + name + "_log.csv";
        detail::write_text(log_path, stream_log_to_csv(detail::without_timing(run.log)));
        const std::string report_path = out_dir + "/stream_" + name + "_report.json";
        detail::write_text(report_path, detail::json_text(report.to_json()));
        out.log_paths.push_back(log_path);
        out.report_paths.push_back(report_path);
        comparison += name + ',' + detail::fmt_g(report.warmup_accuracy) + ',' +
                      detail::fmt_g(report.online_accuracy) + ',' +
                      detail::fmt_g(report.acceptance_rate) + ',' +
                      detail::fmt_g(report.forgetting_rate) + '\n';
    }
    out.comparison_csv = out_dir + "/stream_comparison.csv";
    detail::write_text(out.comparison_csv, comparison);
    return out;
}

// ---------------------------------------------------------------------------
// fewshot

struct FewshotRunResult {
    std::vector<std::string> run_paths;
    std::string aggregate_csv;
};

inline FewshotRunResult cmd_fewshot(const ExperimentConfig& user_cfg, const std::string& out_dir,
                                    const std::string& features_csv, const std::string& mode,
                                    std::vector<std::size_t> shots, std::size_t trials) {
    if (mode != "standard" && mode != "continual")
        throw ConfigError("few-shot mode must be standard or continual (got '" + mode + "')");
    if (trials < 1) throw ConfigError("few-shot sweep needs at least one trial");
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);

    // Episodes always draw their classes from track labels; label_mode only
    // affects the flat classifiers.
    ExperimentConfig track_cfg = cfg;
    track_cfg.label_mode = "track";
    const Dataset data =
        detail::labeled_dataset(detail::read_features_any(features_csv), track_cfg);
    if (shots.empty()) shots = {cfg.fewshot_shot};
    std::filesystem::create_directories(out_dir + "/fewshot");
    const std::size_t width = data.samples.front().features.size();

    FewshotRunResult out;
    std::string agg = mode == "standard"
                          ? "k,trials,mean_accuracy,ci95\n"
                          : "k,trials,episodes_mean,final_accuracy_mean,ci95,"
                            "forgetting_rate_mean\n";
    for (const std::size_t k : shots) {
        std::vector<double> headline, episode_counts, forgetting;
        for (std::size_t t = 0; t < trials; ++t) {
            const std::uint64_t run_seed = seed_for(
                cfg.seed, "fewshot/" + mode + "/k" + std::to_string(k) + "/trial" +
                              std::to_string(t));
            ProtoNetConfig net_cfg = cfg.protonet;
            net_cfg.input_dim = width;
            ProtoNetModel model(net_cfg, seed_for(run_seed, "init"));
            nlohmann::ordered_json run;
            if (mode == "standard") {
                MetaTrainConfig train_cfg;
                train_cfg.episodes = cfg.meta_train_episodes;
                train_cfg.way = cfg.fewshot_way;
                train_cfg.shot = k;
                train_cfg.query = cfg.fewshot_query;
                meta_train(model, data, train_cfg, seed_for(run_seed, "train"));
                MetaTestConfig test_cfg;
                test_cfg.episodes = cfg.meta_test_episodes;
                test_cfg.way = cfg.fewshot_way;
                test_cfg.shot = k;
                test_cfg.query = cfg.fewshot_query;
                const MetaTestResult res =
                    meta_test(model, data, test_cfg, seed_for(run_seed, "test"));
                run["mode"] = "standard";
                run["k"] = k;
                run["trial"] = t;
                run["episodes"] = test_cfg.episodes;
                run["mean_accuracy"] = res.mean_accuracy;
                run["ci95"] = res.ci95;
                headline.push_back(res.mean_accuracy);
            } else {
                ContinualConfig cont_cfg;
                cont_cfg.way = cfg.fewshot_way;
                cont_cfg.shot = k;
                cont_cfg.query = cfg.fewshot_query;
                cont_cfg.steps_per_episode = cfg.fewshot_steps;
                const ContinualResult res =
                    continual_run(model, data, cont_cfg, seed_for(run_seed, "run"));
                run["mode"] = "continual";
                run["trial"] = t;
                auto body = res.to_json();
                body["mean_infer_ms"] = 0.0;
                body["mean_update_ms"] = 0.0;
                for (const auto& item : body.items()) run[item.key()] = item.value();
                headline.push_back(res.final_accuracy);
                episode_counts.push_back(static_cast<double>(res.episodes.size()));
                forgetting.push_back(res.fr_trace.empty() ? 0.0 : res.fr_trace.back());
            }
            const std::string path = out_dir + "/fewshot/" + mode + "_k" + std::to_string(k) +
                                     "_trial" + std::to_string(t) + ".json";
            detail::write_text(path, detail::json_text(run));
            out.run_paths.push_back(path);
        }

        const double mean = detail::mean_of(headline);
        double ci = 0.0;
        if (headline.size() > 1) {
            double ss = 0.0;
            for (const double v : headline) ss += (v - mean) * (v - mean);
            const double sd = std::sqrt(ss / static_cast<double>(headline.size() - 1));
            ci = 1.96 * sd / std::sqrt(static_cast<double>(headline.size()));
        }
        if (mode == "standard") {
            agg += std::to_string(k) + ',' + std::to_string(trials) + ',' + detail::fmt_g(mean) +
                   ',' + detail::fmt_g(ci) + '\n';
        } else {
            agg += std::to_string(k) + ',' + std::to_string(trials) + ',' +
                   detail::fmt_g(detail::mean_of(episode_counts)) + ',' + detail::fmt_g(mean) +
                   ',' + detail::fmt_g(ci) + ',' + detail::fmt_g(detail::mean_of(forgetting)) +
                   '\n';
        }
    }
    out.aggregate_csv = out_dir + "/fewshot_aggregate.csv";
    detail::write_text(out.aggregate_csv, agg);
    return out;
}

// ---------------------------------------------------------------------------
// augment: train / sample / eval / upsample

struct AugmentTrainResult {
    std::string artifact_path;
    std::string loss_csv;
    std::size_t steps = 0;
    std::size_t best_epoch = 0;
};

inline AugmentTrainResult cmd_augment_train(const ExperimentConfig& user_cfg,
                                            const std::string& out_dir,
                                            const std::string& features_csv) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    ExperimentConfig track_cfg = cfg;
    track_cfg.label_mode = "track";  // the generator conditions on the track label
    const Dataset data =
        detail::labeled_dataset(detail::read_features_any(features_csv), track_cfg);
    CvaeConfig gen_cfg = cfg.cvae;
    gen_cfg.feature_dim = data.samples.front().features.size();
    CvaeTrainResult trained = cvae_train(data, gen_cfg, seed_for(cfg.seed, "cvae/train"));

    std::string csv = "step,total,reconstruction,kl\n";
    for (std::size_t i = 0; i < trained.step_log.size(); ++i)
        csv += std::to_string(i) + ',' + detail::fmt_g(trained.step_log[i].total) + ',' +
               detail::fmt_g(trained.step_log[i].recon) + ',' +
               detail::fmt_g(trained.step_log[i].kl) + '\n';

    AugmentTrainResult out;
    out.loss_csv = out_dir + "/cvae_loss.csv";
    detail::write_text(out.loss_csv, csv);
    out.steps = trained.step_log.size();
    out.best_epoch = trained.best_epoch;
    const CvaeArtifact art{std::move(trained.model), cfg.seed, dataset_fingerprint(data)};
    out.artifact_path = out_dir + "/cvae.json";
    detail::write_text(out.artifact_path, cvae_to_bytes(art));
    return out;
}

struct AugmentSampleResult {
    std::string csv_path;
    std::size_t rows = 0;
};

inline AugmentSampleResult cmd_augment_sample(const ExperimentConfig& user_cfg,
                                              const std::string& out_dir,
                                              const std::string& generator_path,
                                              std::size_t per_class) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    CvaeArtifact art = cvae_from_bytes(detail::read_text(generator_path));
    std::vector<AoaSample> synthetic;
    for (const int label : art.model.classes()) {
        auto batch = cvae_sample(art.model, label, per_class,
                                 seed_for(cfg.seed, "augment/sample/" + std::to_string(label)));
        synthetic.insert(synthetic.end(), std::make_move_iterator(batch.begin()),
                         std::make_move_iterator(batch.end()));
    }
    AugmentSampleResult out;
    out.csv_path = out_dir + "/synthetic.csv";
    write_augmented_csv(out.csv_path, synthetic);
    out.rows = synthetic.size();
    return out;
}

struct AugmentEvalResult {
    std::string report_path;
    AugmentMetrics metrics;
};

inline AugmentEvalResult cmd_augment_eval(const ExperimentConfig& user_cfg,
                                          const std::string& out_dir,
                                          const std::string& classifier_path,
                                          const std::string& synthetic_csv) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    const ModelArtifact artifact = load_artifact(detail::read_text(classifier_path));
    const Dataset data = make_track_dataset(detail::read_features_any(synthetic_csv));
    AugmentEvalResult out;
    out.metrics = augment_eval(artifact, data);
    nlohmann::ordered_json j;
    j["accuracy"] = out.metrics.accuracy;
    j["precision"] = out.metrics.precision;
    j["recall"] = out.metrics.recall;
    j["f1"] = out.metrics.f1;
    out.report_path = out_dir + "/augment_metrics.json";
    detail::write_text(out.report_path, detail::json_text(j));
    return out;
}

struct AugmentUpsampleResult {
    std::string csv_path;
    std::size_t rows = 0;
};

inline AugmentUpsampleResult cmd_augment_upsample(const ExperimentConfig& user_cfg,
                                                  const std::string& out_dir,
                                                  const std::string& generator_path,
                                                  const std::string& buffer_csv,
                                                  std::size_t target_per_class) {
    const ExperimentConfig cfg = resolve_experiment(user_cfg);
    detail::persist_config(cfg, out_dir);
    CvaeArtifact art = cvae_from_bytes(detail::read_text(generator_path));
    const auto rows = detail::read_features_any(buffer_csv);
    if (rows.empty()) throw TooFewSamples("replay buffer file " + buffer_csv + " holds no rows");
    ReplayBuffer buffer(rows.size(), art.model.classes());
    for (const auto& s : rows) buffer.push(s, s.track_id);
    const Dataset mixed =
        upsample_buffer(buffer, art.model, target_per_class, seed_for(cfg.seed, "augment/upsample"));
    AugmentUpsampleResult out;
    out.csv_path = out_dir + "/upsampled.csv";
    write_augmented_csv(out.csv_path, mixed.samples);
    out.rows = mixed.samples.size();
    return out;
}

// ---------------------------------------------------------------------------
// report

struct ReportResult {
    std::string path;
};

namespace detail {

inline std::string csv_to_markdown(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::string row = "| ";
        for (const char ch : line)
            if (ch == ',') row += " | ";
            else row += ch;
        out += row + " |\n";
        if (first) {
            const std::size_t cells =
                1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
            out += '|';
            for (std::size_t i = 0; i < cells; ++i) out += "---|";
            out += '\n';
            first = false;
        }
    }
    return out;
}

}  // namespace detail

// Collates whatever result files the run directory holds; purely a
// presentation pass, nothing is recomputed.
inline ReportResult cmd_report(const std::string& out_dir) {
    const auto have = [&out_dir](const char* name) {
        return std::filesystem::exists(std::filesystem::path(out_dir) / name);
    };
    std::string md = "# Run report\n";
    bool any = false;

    if (have("resolved_config.json")) {
        const auto doc =
            nlohmann::ordered_json::parse(detail::read_text(out_dir + "/resolved_config.json"));
        md += "\n## Configuration\n\n";
        md += "- seed: " + doc.at("seed").dump() + "\n";
        md += "- tracks: " + std::to_string(doc.at("tracks").size()) + "\n";
        md += "- estimator: " + doc.at("estimator").get<std::string>() + "\n";
    }
    if (have("offline_report.json")) {
        any = true;
        const auto doc =
            nlohmann::ordered_json::parse(detail::read_text(out_dir + "/offline_report.json"));
        md += "\n## Offline classification\n\n| stage | accuracy | macro F1 |\n|---|---|---|\n";
        for (const char* stage : {"stage1", "stage2_los", "stage2_nlos"})
            if (doc.contains(stage))
                md += std::string("| ") + stage + " | " + doc.at(stage).at("accuracy").dump() +
                      " | " + doc.at(stage).at("macro_f1").dump() + " |\n";
    }
    if (have("tune_best.json")) {
        any = true;
        const auto doc =
            nlohmann::ordered_json::parse(detail::read_text(out_dir + "/tune_best.json"));
        md += "\n## Hyperparameter search\n\n";
        md += "Best " + doc.at("kind").get<std::string>() + " score " +
              doc.at("best_score").dump() + " over " + doc.at("trials").dump() +
              " sampled configurations (" + doc.at("folds").dump() +
              "-fold validation), found at trial " + doc.at("best_index").dump() + ".\n";
    }
    if (have("retrain_curves.csv")) {
        any = true;
        md += "\n## Retraining strategies\n\n" +
              detail::csv_to_markdown(detail::read_text(out_dir + "/retrain_curves.csv"));
    }
    if (have("stream_comparison.csv")) {
        any = true;
        md += "\n## Streaming learners\n\n" +
              detail::csv_to_markdown(detail::read_text(out_dir + "/stream_comparison.csv"));
    }
    if (have("fewshot_aggregate.csv")) {
        any = true;
        md += "\n## Few-shot adaptation\n\n" +
              detail::csv_to_markdown(detail::read_text(out_dir + "/fewshot_aggregate.csv"));
    }
    if (have("augment_metrics.json")) {
        any = true;
        const auto doc =
            nlohmann::ordered_json::parse(detail::read_text(out_dir + "/augment_metrics.json"));
        md += "\n## Augmentation\n\n| accuracy | precision | recall | f1 |\n|---|---|---|---|\n| " +
              doc.at("accuracy").dump() + " | " + doc.at("precision").dump() + " | " +
              doc.at("recall").dump() + " | " + doc.at("f1").dump() + " |\n";
    }
    if (!any)
        throw MissingArtifacts(
            "nothing to report in " + out_dir +
            "; expected results such as offline_report.json, stream_comparison.csv, "
            "fewshot_aggregate.csv, retrain_curves.csv, or augment_metrics.json");

    ReportResult out;
    out.path = out_dir + "/report.md";
    detail::write_text(out.path, md);
    return out;
}

}  // namespace aoalab
