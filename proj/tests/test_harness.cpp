#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loft/data.hpp"
#include "loft/errors.hpp"
#include "loft/metrics.hpp"
#include "loft/model.hpp"
#include "loft/rng.hpp"
#include "loft/train.hpp"

using namespace loft;

namespace {

// Confusion-matrix arithmetic written out longhand, kept independent of the
// library so the two can disagree.
struct Oracle {
    double acc = 0.0;
    double wf1 = 0.0;
};

bool oracle_contains(std::string hay, std::string needle) {
    return normalize_text(hay).find(normalize_text(needle)) !=
           std::string::npos;
}

Oracle brute_force(const std::vector<std::string>& preds,
                   const std::vector<std::string>& golds,
                   const std::vector<std::string>& classes) {
    Oracle o;
    const double n = double(golds.size());
    for (size_t i = 0; i < golds.size(); ++i)
        if (oracle_contains(preds[i], golds[i])) o.acc += 1.0 / n;
    for (const std::string& c : classes) {
        double tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < golds.size(); ++i) {
            std::string mapped;
            for (const std::string& cand : classes)
                if (oracle_contains(preds[i], cand)) {
                    mapped = cand;
                    break;
                }
            if (golds[i] == c && mapped == c) tp += 1;
            if (golds[i] == c && mapped != c) fn += 1;
            if (golds[i] != c && mapped == c) fp += 1;
        }
        const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double f1 =
            prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        o.wf1 += (tp + fn) / n * f1;
    }
    return o;
}

std::string write_lines(const std::string& name,
                        const std::vector<std::string>& lines) {
    std::ofstream out(name, std::ios::trunc);
    for (const std::string& l : lines) out << l << "\n";
    return name;
}

}  // namespace

TEST_CASE("text normalization") {
    CHECK(normalize_text("  The   Answer\tIS\n RED  ") == "the answer is red");
    CHECK(normalize_text("") == "");
    CHECK(normalize_text(" \t\n ") == "");
    CHECK(normalize_text("AbC") == "abc");
    CHECK(normalize_text("a  b") == "a b");
}

TEST_CASE("containment accuracy") {
    CHECK(accuracy({"I think it is Red."}, {"red"}) == 1.0);
    CHECK(accuracy({"blue"}, {"red"}) == 0.0);
    CHECK(accuracy({"a", "b"}, {"a", "b"}) == 1.0);
    CHECK(accuracy({}, {}) == 0.0);
    CHECK_THROWS_AS(accuracy({"a"}, {"a", "b"}), InputError);
}

TEST_CASE("prediction to class mapping honors class order") {
    std::vector<std::string> classes = {"ab", "b"};
    CHECK(map_to_class("xx ab yy", classes) == "ab");
    CHECK(map_to_class("zb", classes) == "b");
    CHECK(map_to_class("zzz", classes) == "");
    CHECK(map_to_class("B", classes) == "b");  // normalization applies
    CHECK(distinct_classes({"c", "a", "c", "b"}) ==
          std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("hand-scored example") {
    std::vector<std::string> golds = {"A", "A", "B"};
    std::vector<std::string> preds = {"A", "B", "B"};
    EvalResult res = evaluate(preds, golds);
    CHECK(res.accuracy == doctest::Approx(2.0 / 3).epsilon(1e-12));
    REQUIRE(res.weighted_f1.has_value());
    CHECK(*res.weighted_f1 == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(res.per_class.at("A").precision == 1.0);
    CHECK(res.per_class.at("A").recall == 0.5);
    CHECK(res.per_class.at("B").precision == 0.5);
    CHECK(res.per_class.at("B").recall == 1.0);
    CHECK(res.per_class.at("A").support == 2);
}

TEST_CASE("metrics agree with a brute-force oracle") {
    const std::vector<std::string> classes = {"apple", "grape", "melon"};
    Rng rng(44);
    for (int round = 0; round < 300; ++round) {
        const size_t n = 1 + rng.next_below(12);
        std::vector<std::string> golds, preds;
        for (size_t i = 0; i < n; ++i) {
            golds.push_back(classes[rng.next_below(3)]);
            switch (rng.next_below(5)) {
                case 0: preds.push_back("junk output"); break;
                case 1: preds.push_back(""); break;
                case 2:
                    preds.push_back("i choose " + classes[rng.next_below(3)]);
                    break;
                default: preds.push_back(classes[rng.next_below(3)]);
            }
        }
        Oracle o = brute_force(preds, golds, classes);
        CHECK(accuracy(preds, golds) == doctest::Approx(o.acc).epsilon(1e-12));
        CHECK(weighted_f1(preds, golds, classes) ==
              doctest::Approx(o.wf1).epsilon(1e-12));
    }
    CHECK_THROWS_AS(weighted_f1({"x"}, {"pear"}, classes), LabelError);
}

TEST_CASE("jsonl loading") {
    const std::string path = write_lines(
        "harness_ok.jsonl",
        {R"({"input": "q1", "output": "a1"})",
         "",
         R"({"input": "q2", "output": "a2", "task_id": "t", "context": "c"})",
         R"({"input": "q3", "output": "a3", "extra": 42})"});
    std::vector<TaskRecord> recs = load_jsonl(path);
    std::filesystem::remove(path);
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].input == "q1");
    CHECK(recs[0].task_id == "");
    CHECK(recs[1].task_id == "t");
    CHECK(recs[1].context == "c");
    CHECK(recs[2].output == "a3");  // unknown fields are ignored

    const std::string bad =
        write_lines("harness_bad.jsonl",
                    {R"({"input": "q", "output": "a"})", "not json {"});
    CHECK_THROWS_WITH_AS(load_jsonl(bad), doctest::Contains("line 2"),
                         ParseError);
    std::filesystem::remove(bad);

    const std::string missing = write_lines(
        "harness_missing.jsonl", {R"({"input": "q"})"});
    CHECK_THROWS_WITH_AS(load_jsonl(missing), doctest::Contains("output"),
                         SchemaError);
    std::filesystem::remove(missing);

    CHECK_THROWS_AS(load_jsonl("no_such_file.jsonl"), FormatError);
}

TEST_CASE("jsonl write-read round trip") {
    std::vector<TaskRecord> recs = {{"in \"quoted\"", "out\nline", "tid", ""},
                                    {"plain", "answer", "", "ctx"}};
    const std::string path = "harness_rt.jsonl";
    write_jsonl(path, recs);
    std::vector<TaskRecord> back = load_jsonl(path);
    std::filesystem::remove(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].input == recs[0].input);
    CHECK(back[0].output == recs[0].output);
    CHECK(back[1].context == "ctx");
}

TEST_CASE("prompt template") {
    TaskRecord rec{"What color?", "red", "", ""};
    CHECK(assemble_prompt(rec) == "Q: What color?\nA: ");
    TaskRecord with_ctx{"What color?", "red", "", "the sky"};
    CHECK(assemble_prompt(with_ctx) == "C: the sky\nQ: What color?\nA: ");
    TaskRecord shot{"Example?", "yes", "", ""};
    CHECK(assemble_prompt(rec, &shot) ==
          "Q: Example?\nA: yes\n\nQ: What color?\nA: ");
}

TEST_CASE("label mapping") {
    std::vector<TaskRecord> recs = {{"a", "strong buy", "", ""},
                                    {"b", "hold", "", ""}};
    apply_label_map(recs, {{"strong buy", "buy"}});
    CHECK(recs[0].output == "buy");
    CHECK(recs[1].output == "hold");
}

TEST_CASE("record shuffling is seed stable") {
    std::vector<TaskRecord> a, b;
    for (int i = 0; i < 20; ++i) {
        a.push_back({"q" + std::to_string(i), "x", "", ""});
        b.push_back({"q" + std::to_string(i), "x", "", ""});
    }
    Rng r1(5), r2(5);
    shuffle_records(a, r1);
    shuffle_records(b, r2);
    bool moved = false;
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].input == b[i].input);
        moved = moved || a[i].input != "q" + std::to_string(i);
    }
    CHECK(moved);
}

TEST_CASE("synthetic marker task") {
    SyntheticTask task = make_synthetic_task(60, 20, 9);
    CHECK(task.train.size() == 60);
    CHECK(task.test.size() == 20);
    const std::map<char, std::string> legend = {
        {'@', "red"}, {'#', "green"}, {'%', "blue"}};
    std::set<std::string> seen;
    auto check_rec = [&](const TaskRecord& rec) {
        int markers = 0;
        char which = 0;
        for (char c : rec.input)
            if (legend.count(c)) {
                ++markers;
                which = c;
            }
        CHECK(markers == 1);
        CHECK(rec.output == legend.at(which));
        CHECK(rec.task_id == "marker-colors");
        seen.insert(rec.output);
    };
    for (const auto& r : task.train) check_rec(r);
    for (const auto& r : task.test) check_rec(r);
    CHECK(seen.size() == 3);  // all three labels occur

    // Same seed, same data; the task is a pure function of its arguments.
    SyntheticTask again = make_synthetic_task(60, 20, 9);
    for (size_t i = 0; i < 60; ++i)
        CHECK(again.train[i].input == task.train[i].input);
}

TEST_CASE("example tokenization") {
    ArchConfig arch = ArchConfig::preset("toy");
    TaskRecord rec{"hi", "red", "", ""};
    TrainExample ex = tokenize_example(arch, rec);
    const std::string prompt = "Q: hi\nA: ";
    CHECK(ex.prompt_len == 1 + int64_t(prompt.size()));
    REQUIRE(ex.tokens.size() == 1 + prompt.size() + 3 + 1);
    CHECK(ex.tokens.front() == kBosId);
    CHECK(ex.tokens.back() == kEosId);
    CHECK(ex.tokens[1] == int64_t('Q'));
    CHECK(ex.tokens[ex.prompt_len] == int64_t('r'));

    TaskRecord huge{std::string(200, 'x'), "y", "", ""};
    CHECK_THROWS_AS(tokenize_example(arch, huge), DomainError);
}

TEST_CASE("zero-epoch finetune leaves the model at its initialization") {
    SyntheticTask task = make_synthetic_task(12, 4, 3);
    TrainConfig cfg;
    cfg.arch.max_seq = 64;
    cfg.epochs = 0;
    cfg.batch_size = 4;
    cfg.seed = 21;
    cfg.out_dir = "harness_zero_run";
    FinetuneResult res = run_finetune(cfg, &task.train);
    ToyModel base = build_model(cfg.arch, cfg.quant, cfg.r, cfg.alpha,
                                cfg.dropout, cfg.seed);
    CHECK(res.model.trainable_hash() == base.trainable_hash());
    CHECK(res.model.base_hash() == base.base_hash());
    CHECK(res.epochs.empty());
    CHECK(std::filesystem::exists(res.adapter_path));
    CHECK(std::filesystem::exists(res.checkpoint_path));
    std::filesystem::remove_all("harness_zero_run");
}

TEST_CASE("short finetune produces artifacts and finite metrics") {
    SyntheticTask task = make_synthetic_task(16, 4, 5);
    TrainConfig cfg;
    cfg.arch = ArchConfig::preset("toy");
    cfg.arch.n_layers = 1;
    cfg.arch.d_model = 16;
    cfg.arch.d_kv = 8;
    cfg.arch.n_heads = 2;
    cfg.arch.max_seq = 64;
    cfg.arch.preset_id = "";
    cfg.r = 2;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.lr = 1e-3;
    cfg.optimizer = OptimKind::zero_one_adam;
    cfg.freeze_step = 1;
    cfg.workers = 2;
    cfg.seed = 13;
    cfg.out_dir = "harness_short_run";
    cfg.max_new_tokens = 6;
    FinetuneResult res = run_finetune(cfg, &task.train);
    REQUIRE(res.epochs.size() == 1);
    CHECK(std::isfinite(res.epochs[0].loss));
    CHECK(res.epochs[0].loss > 0.0);
    CHECK(res.epochs[0].bits_transmitted > 0);
    CHECK(res.epochs[0].worker_hours > 0.0);

    // The metrics file carries one JSON record per epoch.
    std::ifstream in(res.metrics_path);
    REQUIRE(in.good());
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        CHECK(j["epoch"] == ++lines);
        CHECK(j.contains("loss"));
        CHECK(j.contains("accuracy"));
        CHECK(j.contains("weighted_f1"));
        CHECK(j.contains("worker_hours"));
        CHECK(j.contains("bits_transmitted"));
    }
    CHECK(lines == 1);

    // The checkpoint reloads into the same adapters it saved.
    ToyModel back = load_model(res.checkpoint_path);
    CHECK(back.trainable_hash() == res.model.trainable_hash());
    std::filesystem::remove_all("harness_short_run");
}

TEST_CASE("evaluation counts undecodable prompts as failures") {
    ToyModel m = build_model(ArchConfig::preset("toy"), {}, 2, 8.0, 0.0, 2);
    std::vector<TaskRecord> recs = {{"ok", "red", "", ""},
                                    {std::string(300, 'x'), "red", "", ""}};
    EvalReport rep = run_eval(m, recs, false, 4);
    CHECK(rep.decode_failures == 1);
    REQUIRE(rep.predictions.size() == 2);
    CHECK(rep.predictions[1] == "");
    CHECK(rep.latencies_s.size() == 2);
    CHECK(rep.mean_latency_s > 0.0);
    CHECK(rep.metrics.n == 2);
}
