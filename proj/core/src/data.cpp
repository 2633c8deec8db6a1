#include "loft/data.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "loft/errors.hpp"

namespace loft {

namespace {

bool blank(const std::string& line) {
    for (char c : line)
        if (c != ' ' && c != '\t' && c != '\r') return false;
    return true;
}

std::string require_text(const nlohmann::json& j, const char* field,
                         int64_t line_no) {
    if (!j.contains(field) || !j[field].is_string() ||
        j[field].get<std::string>().empty())
        throw SchemaError("line " + std::to_string(line_no) +
                          ": missing or empty field '" + field + "'");
    return j[field].get<std::string>();
}

std::string optional_text(const nlohmann::json& j, const char* field,
                          int64_t line_no) {
    if (!j.contains(field)) return "";
    if (!j[field].is_string())
        throw SchemaError("line " + std::to_string(line_no) + ": field '" +
                          field + "' must be a string");
    return j[field].get<std::string>();
}

}  // namespace

std::vector<TaskRecord> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open dataset " + path);
    std::vector<TaskRecord> out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        nlohmann::json j =
            nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded())
            throw ParseError(path + ": line " + std::to_string(line_no) +
                             " is not valid JSON");
        if (!j.is_object())
            throw ParseError(path + ": line " + std::to_string(line_no) +
                             " must be a JSON object");
        TaskRecord rec;
        rec.input = require_text(j, "input", line_no);
        rec.output = require_text(j, "output", line_no);
        rec.task_id = optional_text(j, "task_id", line_no);
        rec.context = optional_text(j, "context", line_no);
        out.push_back(std::move(rec));
    }
    return out;
}

void write_jsonl(const std::string& path,
                 const std::vector<TaskRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write dataset " + path);
    for (const TaskRecord& rec : records) {
        nlohmann::json j;
        j["input"] = rec.input;
        j["output"] = rec.output;
        if (!rec.task_id.empty()) j["task_id"] = rec.task_id;
        if (!rec.context.empty()) j["context"] = rec.context;
        out << j.dump() << '\n';
    }
    if (!out) throw FormatError("failed writing dataset " + path);
}

std::string assemble_prompt(const TaskRecord& rec, const TaskRecord* one_shot) {
    std::string p;
    if (one_shot)
        p += "Q: " + one_shot->input + "\nA: " + one_shot->output + "\n\n";
    if (!rec.context.empty()) p += "C: " + rec.context + "\n";
    p += "Q: " + rec.input + "\nA: ";
    return p;
}

void apply_label_map(std::vector<TaskRecord>& records,
                     const std::map<std::string, std::string>& label_map) {
    for (TaskRecord& rec : records) {
        auto it = label_map.find(rec.output);
        if (it != label_map.end()) rec.output = it->second;
    }
}

void shuffle_records(std::vector<TaskRecord>& records, Rng& rng) {
    for (size_t i = records.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.next_below(i));
        std::swap(records[i - 1], records[j]);
    }
}

namespace {

constexpr char kMarkers[3] = {'@', '#', '%'};
const char* kColors[3] = {"red", "green", "blue"};

TaskRecord synthetic_record(Rng& rng) {
    static const char kFiller[] = "abcdefghijklmnopqrstuvwxyz ";
    const int64_t len = 8 + static_cast<int64_t>(rng.next_below(12));
    std::string s;
    for (int64_t i = 0; i < len; ++i)
        s += kFiller[rng.next_below(sizeof(kFiller) - 1)];
    const uint64_t which = rng.next_below(3);
    const uint64_t at = rng.next_below(static_cast<uint64_t>(len) + 1);
    s.insert(s.begin() + static_cast<int64_t>(at), kMarkers[which]);
    TaskRecord rec;
    rec.input = s;
    rec.output = kColors[which];
    rec.task_id = "marker-colors";
    return rec;
}

}  // namespace

SyntheticTask make_synthetic_task(int64_t n_train, int64_t n_test,
                                  uint64_t seed) {
    SyntheticTask task;
    Rng rng(seed);
    for (int64_t i = 0; i < n_train; ++i)
        task.train.push_back(synthetic_record(rng));
    for (int64_t i = 0; i < n_test; ++i)
        task.test.push_back(synthetic_record(rng));
    return task;
}

}  // namespace loft
