// loft: QLoRA-style finetuning and capacity planning for the toy byte
// decoder. Subcommands: plan, train, eval, infer. Every long flag can also
// be given through --config <file.json>, keyed by the flag name with
// dashes replaced by underscores; explicit flags win over the file.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "loft/data.hpp"
#include "loft/errors.hpp"
#include "loft/lora.hpp"
#include "loft/metrics.hpp"
#include "loft/model.hpp"
#include "loft/parallel.hpp"
#include "loft/planner.hpp"
#include "loft/train.hpp"

namespace {

using nlohmann::json;

std::string key_for(const std::string& flag) {
    std::string key = flag;
    for (char& c : key)
        if (c == '-') c = '_';
    return key;
}

// Fills bound variables from the JSON config for every option the command
// line left untouched.
class ConfigFill {
public:
    ConfigFill(CLI::App* cmd, const std::string& path) : cmd_(cmd) {
        if (path.empty()) return;
        std::ifstream in(path);
        if (!in) throw loft::ConfigError("cannot open config " + path);
        j_ = json::parse(in, nullptr, /*allow_exceptions=*/false);
        if (j_.is_discarded())
            throw loft::ConfigError("config " + path + " is not valid JSON");
        if (!j_.is_object())
            throw loft::ConfigError("config " + path +
                                    " must be a JSON object");
        active_ = true;
    }

    template <typename T>
    void fill(const std::string& flag, T& var) {
        if (!active_) return;
        const std::string key = key_for(flag);
        if (!j_.contains(key)) return;
        used_.push_back(key);
        if (cmd_->get_option("--" + flag)->count() > 0) return;
        try {
            var = j_[key].get<T>();
        } catch (const json::exception&) {
            throw loft::ConfigError("config field '" + key +
                                    "' has the wrong type");
        }
    }

    void fill_paths(const std::string& flag, std::vector<std::string>& var) {
        if (!active_) return;
        const std::string key = key_for(flag);
        if (!j_.contains(key)) return;
        used_.push_back(key);
        if (cmd_->get_option("--" + flag)->count() > 0) return;
        if (j_[key].is_string())
            var = {j_[key].get<std::string>()};
        else if (j_[key].is_array())
            var = j_[key].get<std::vector<std::string>>();
        else
            throw loft::ConfigError("config field '" + key +
                                    "' must be a string or array");
    }

    void fill_label_map(std::map<std::string, std::string>& var) {
        if (!active_ || !j_.contains("label_map")) return;
        used_.push_back("label_map");
        try {
            var = j_["label_map"].get<std::map<std::string, std::string>>();
        } catch (const json::exception&) {
            throw loft::ConfigError(
                "config field 'label_map' must map strings to strings");
        }
    }

    void finish() const {
        if (!active_) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (std::find(used_.begin(), used_.end(), it.key()) == used_.end())
                throw loft::ConfigError("config field '" + it.key() +
                                        "' is not recognized here");
    }

private:
    CLI::App* cmd_;
    json j_;
    bool active_ = false;
    std::vector<std::string> used_;
};

loft::QuantConfig make_quant(int64_t bits, const std::string& codebook,
                             int64_t block_size) {
    loft::QuantConfig q;
    q.bits = static_cast<int>(bits);
    q.block_size = block_size;
    if (codebook == "absmax")
        q.codebook = loft::CodebookId::int_absmax;
    else if (codebook == "nf4")
        q.codebook = loft::CodebookId::nf4;
    else
        throw loft::ConfigError("unknown codebook '" + codebook +
                                "' (use absmax or nf4)");
    q.validate();
    return q;
}

loft::OptimKind make_optimizer(const std::string& name) {
    if (name == "adam") return loft::OptimKind::adam;
    if (name == "zero-one-adam" || name == "01adam")
        return loft::OptimKind::zero_one_adam;
    throw loft::ConfigError("unknown optimizer '" + name +
                            "' (use adam or zero-one-adam)");
}

// Shared model/run options for train, eval, infer.
struct RunFlags {
    std::string arch = "toy";
    int64_t rank = 8;
    double alpha = 32.0;
    double dropout = 0.0;
    int64_t bits = 8;
    std::string codebook = "absmax";
    int64_t block_size = 64;
    uint64_t seed = 0;
    std::string config_path;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--arch", f.arch, "architecture preset")
        ->capture_default_str();
    cmd->add_option("--rank,-r", f.rank, "adapter rank")->capture_default_str();
    cmd->add_option("--alpha", f.alpha, "adapter scale numerator")
        ->capture_default_str();
    cmd->add_option("--dropout", f.dropout, "adapter input dropout")
        ->capture_default_str();
    cmd->add_option("--bits", f.bits, "base weight width (4 or 8)")
        ->capture_default_str();
    cmd->add_option("--codebook", f.codebook, "absmax or nf4")
        ->capture_default_str();
    cmd->add_option("--block-size", f.block_size, "quantization block size")
        ->capture_default_str();
    cmd->add_option("--seed", f.seed, "run seed")->capture_default_str();
    cmd->add_option("--config", f.config_path,
                    "JSON file with defaults for these flags");
}

void fill_run_flags(ConfigFill& cf, RunFlags& f) {
    cf.fill("arch", f.arch);
    cf.fill("rank", f.rank);
    cf.fill("alpha", f.alpha);
    cf.fill("dropout", f.dropout);
    cf.fill("bits", f.bits);
    cf.fill("codebook", f.codebook);
    cf.fill("block-size", f.block_size);
    cf.fill("seed", f.seed);
}

loft::ToyModel load_or_build(const std::string& model_path, const RunFlags& f,
                             const std::string& adapter_path) {
    loft::ToyModel model =
        model_path.empty()
            ? loft::build_model(loft::ArchConfig::preset(f.arch),
                                make_quant(f.bits, f.codebook, f.block_size),
                                f.rank, f.alpha, f.dropout, f.seed)
            : loft::load_model(model_path);
    if (!adapter_path.empty()) {
        model.replace_adapters(loft::load_adapters(adapter_path));
        model.refresh_caches();
    }
    return model;
}

int run_plan(const RunFlags& f, const std::string& out_dir) {
    loft::PlanReport rep =
        loft::plan(loft::ArchConfig::preset(f.arch), f.rank, f.bits);
    std::cout << loft::render_plan_text(rep);
    const std::string record = loft::plan_record(rep);
    std::cout << record << "\n";
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir + "/plan.json", std::ios::trunc);
        if (!out)
            throw loft::FormatError("cannot write " + out_dir + "/plan.json");
        out << record << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "QLoRA-style finetuning engine and capacity planner for a toy byte "
        "decoder"};
    app.require_subcommand(1);

    // ---- plan ----------------------------------------------------------
    RunFlags plan_flags;
    plan_flags.arch = "llama3-8b";
    std::string plan_out;
    CLI::App* plan_cmd =
        app.add_subcommand("plan", "parameter and size accounting");
    add_run_flags(plan_cmd, plan_flags);
    plan_cmd->add_option("--out", plan_out, "directory for plan.json");

    // ---- train ---------------------------------------------------------
    RunFlags train_flags;
    std::vector<std::string> train_data;
    std::string train_eval_data;
    std::string train_out = "run";
    int64_t train_epochs = 1, train_batch = 16, train_workers = 1;
    int64_t train_freeze = 0, train_max_new = 16, train_max_eval = 200;
    double train_lr = 1e-4;
    std::string train_optimizer = "zero-one-adam";
    bool train_one_shot = false;
    CLI::App* train_cmd = app.add_subcommand("train", "finetune adapters");
    add_run_flags(train_cmd, train_flags);
    train_cmd->add_option("--data", train_data, "dataset path (repeat for multi-task)");
    train_cmd->add_option("--eval-data", train_eval_data,
                          "held-out dataset for epoch metrics");
    train_cmd->add_option("--epochs", train_epochs, "")->capture_default_str();
    train_cmd->add_option("--batch", train_batch, "global batch size")
        ->capture_default_str();
    train_cmd->add_option("--lr", train_lr, "")->capture_default_str();
    train_cmd->add_option("--optimizer", train_optimizer,
                          "adam or zero-one-adam")
        ->capture_default_str();
    train_cmd->add_option("--freeze-step", train_freeze,
                          "variance freeze step (0 = quarter of the run)")
        ->capture_default_str();
    train_cmd->add_option("--workers", train_workers, "data-parallel replicas")
        ->capture_default_str();
    train_cmd->add_flag("--one-shot", train_one_shot,
                        "prepend a worked example to every prompt");
    train_cmd->add_option("--out", train_out, "output directory")
        ->capture_default_str();
    train_cmd->add_option("--max-new", train_max_new,
                          "generation budget for epoch metrics")
        ->capture_default_str();
    train_cmd->add_option("--max-eval", train_max_eval,
                          "epoch metric example cap")
        ->capture_default_str();

    // ---- eval ----------------------------------------------------------
    RunFlags eval_flags;
    std::string eval_model, eval_adapter, eval_out;
    std::vector<std::string> eval_data;
    int64_t eval_max_new = 16;
    bool eval_one_shot = false;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score a dataset");
    add_run_flags(eval_cmd, eval_flags);
    eval_cmd->add_option("--model", eval_model, "checkpoint (.flck)");
    eval_cmd->add_option("--adapter", eval_adapter, "adapter file (.flra)");
    eval_cmd->add_option("--data", eval_data, "dataset to score")
        ->required();
    eval_cmd->add_flag("--one-shot", eval_one_shot, "");
    eval_cmd->add_option("--max-new", eval_max_new, "")->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "directory for eval.json");

    // ---- infer ---------------------------------------------------------
    RunFlags infer_flags;
    std::string infer_model, infer_adapter, infer_prompt;
    int64_t infer_max_new = 64, infer_stages = 1;
    CLI::App* infer_cmd = app.add_subcommand("infer", "complete one prompt");
    add_run_flags(infer_cmd, infer_flags);
    infer_cmd->add_option("--model", infer_model, "checkpoint (.flck)");
    infer_cmd->add_option("--adapter", infer_adapter, "adapter file (.flra)");
    infer_cmd->add_option("--prompt", infer_prompt, "prompt text")->required();
    infer_cmd->add_option("--max-new", infer_max_new, "")
        ->capture_default_str();
    infer_cmd->add_option("--pipeline-stages", infer_stages,
                          "run the forward pass in this many layer stages")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (plan_cmd->parsed()) {
            ConfigFill cf(plan_cmd, plan_flags.config_path);
            fill_run_flags(cf, plan_flags);
            cf.fill("out", plan_out);
            cf.finish();
            return run_plan(plan_flags, plan_out);
        }

        if (train_cmd->parsed()) {
            ConfigFill cf(train_cmd, train_flags.config_path);
            fill_run_flags(cf, train_flags);
            loft::TrainConfig cfg;
            cf.fill_paths("data", train_data);
            cf.fill("eval-data", train_eval_data);
            cf.fill("epochs", train_epochs);
            cf.fill("batch", train_batch);
            cf.fill("lr", train_lr);
            cf.fill("optimizer", train_optimizer);
            cf.fill("freeze-step", train_freeze);
            cf.fill("workers", train_workers);
            cf.fill("one-shot", train_one_shot);
            cf.fill("out", train_out);
            cf.fill("max-new", train_max_new);
            cf.fill("max-eval", train_max_eval);
            cf.fill_label_map(cfg.label_map);
            cf.finish();
            if (train_data.empty())
                throw loft::ConfigError("train needs at least one --data path");

            cfg.arch = loft::ArchConfig::preset(train_flags.arch);
            cfg.quant = make_quant(train_flags.bits, train_flags.codebook,
                                   train_flags.block_size);
            cfg.r = train_flags.rank;
            cfg.alpha = train_flags.alpha;
            cfg.dropout = train_flags.dropout;
            cfg.seed = train_flags.seed;
            cfg.epochs = train_epochs;
            cfg.batch_size = train_batch;
            cfg.lr = train_lr;
            cfg.optimizer = make_optimizer(train_optimizer);
            cfg.freeze_step = train_freeze;
            cfg.workers = train_workers;
            cfg.data_paths = train_data;
            cfg.eval_data = train_eval_data;
            cfg.one_shot = train_one_shot;
            cfg.out_dir = train_out;
            cfg.max_new_tokens = train_max_new;
            cfg.max_eval_examples = train_max_eval;

            loft::FinetuneResult res = loft::run_finetune(cfg);
            for (const loft::EpochRecord& e : res.epochs)
                std::printf(
                    "epoch %lld  loss %.4f  accuracy %.3f  f1 %.3f  "
                    "worker-hours %.5f  bits %llu\n",
                    static_cast<long long>(e.epoch), e.loss, e.accuracy,
                    e.weighted_f1.value_or(0.0), e.worker_hours,
                    static_cast<unsigned long long>(e.bits_transmitted));
            std::cout << "adapter: " << res.adapter_path << "\n"
                      << "checkpoint: " << res.checkpoint_path << "\n"
                      << "metrics: " << res.metrics_path << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            ConfigFill cf(eval_cmd, eval_flags.config_path);
            fill_run_flags(cf, eval_flags);
            cf.fill("model", eval_model);
            cf.fill("adapter", eval_adapter);
            cf.fill_paths("data", eval_data);
            cf.fill("one-shot", eval_one_shot);
            cf.fill("max-new", eval_max_new);
            cf.fill("out", eval_out);
            cf.finish();

            loft::ToyModel model =
                load_or_build(eval_model, eval_flags, eval_adapter);
            std::vector<loft::TaskRecord> records;
            for (const std::string& path : eval_data) {
                std::vector<loft::TaskRecord> part = loft::load_jsonl(path);
                records.insert(records.end(), part.begin(), part.end());
            }
            loft::EvalReport rep =
                loft::run_eval(model, records, eval_one_shot, eval_max_new);
            std::printf("examples %lld\naccuracy %.4f\n",
                        static_cast<long long>(rep.metrics.n),
                        rep.metrics.accuracy);
            if (rep.metrics.weighted_f1)
                std::printf("weighted_f1 %.4f\n", *rep.metrics.weighted_f1);
            std::printf("mean_latency_s %.6f\ndecode_failures %lld\n",
                        rep.mean_latency_s,
                        static_cast<long long>(rep.decode_failures));
            if (!eval_out.empty()) {
                std::filesystem::create_directories(eval_out);
                json j;
                j["n"] = rep.metrics.n;
                j["accuracy"] = rep.metrics.accuracy;
                if (rep.metrics.weighted_f1)
                    j["weighted_f1"] = *rep.metrics.weighted_f1;
                j["mean_latency_s"] = rep.mean_latency_s;
                j["decode_failures"] = rep.decode_failures;
                j["predictions"] = rep.predictions;
                j["latencies_s"] = rep.latencies_s;
                std::ofstream out(eval_out + "/eval.json", std::ios::trunc);
                if (!out)
                    throw loft::FormatError("cannot write " + eval_out +
                                            "/eval.json");
                // An undertrained model can emit arbitrary bytes; replace
                // anything that is not valid UTF-8 rather than aborting.
                out << j.dump(2, ' ', false,
                              nlohmann::json::error_handler_t::replace)
                    << "\n";
            }
            return 0;
        }

        if (infer_cmd->parsed()) {
            ConfigFill cf(infer_cmd, infer_flags.config_path);
            fill_run_flags(cf, infer_flags);
            cf.fill("model", infer_model);
            cf.fill("adapter", infer_adapter);
            cf.fill("prompt", infer_prompt);
            cf.fill("max-new", infer_max_new);
            cf.fill("pipeline-stages", infer_stages);
            cf.finish();

            loft::ToyModel model =
                load_or_build(infer_model, infer_flags, infer_adapter);
            std::vector<int64_t> tokens;
            tokens.push_back(loft::kBosId);
            for (int64_t id : loft::encode_bytes(infer_prompt))
                tokens.push_back(id);
            const std::vector<int64_t> out =
                infer_stages > 1
                    ? loft::generate_pipelined(model, infer_stages, tokens,
                                               infer_max_new)
                    : model.generate(tokens, infer_max_new);
            std::cout << loft::decode_bytes(out) << "\n";
            return 0;
        }
    } catch (const loft::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
