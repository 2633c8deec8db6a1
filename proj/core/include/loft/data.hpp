#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loft/rng.hpp"

namespace loft {

// One supervised example. input and output are required and non-empty;
// task_id and context are optional in the file and default to empty.
struct TaskRecord {
    std::string input;
    std::string output;
    std::string task_id;
    std::string context;
};

// One JSON object per line; unknown fields are ignored, blank lines are
// skipped. Errors name the 1-based line number.
std::vector<TaskRecord> load_jsonl(const std::string& path);
void write_jsonl(const std::string& path,
                 const std::vector<TaskRecord>& records);

// Fixed prompt template:
//   [ "Q: " + shot.input + "\nA: " + shot.output + "\n\n" ]   (one-shot)
//   [ "C: " + rec.context + "\n" ]                            (if non-empty)
//   "Q: " + rec.input + "\nA: "
std::string assemble_prompt(const TaskRecord& rec,
                            const TaskRecord* one_shot = nullptr);

// Rewrites gold outputs through the map; outputs not in the map pass
// through unchanged. Used for datasets whose label set must be coarsened.
void apply_label_map(std::vector<TaskRecord>& records,
                     const std::map<std::string, std::string>& label_map);

// In-place Fisher-Yates driven by the given stream, so the order is
// reproducible across platforms.
void shuffle_records(std::vector<TaskRecord>& records, Rng& rng);

// Three-way pattern labeling task: the input is lowercase filler with one
// marker character; the output names the marker's color. '@' -> "red",
// '#' -> "green", '%' -> "blue".
struct SyntheticTask {
    std::vector<TaskRecord> train;
    std::vector<TaskRecord> test;
};

SyntheticTask make_synthetic_task(int64_t n_train, int64_t n_test,
                                  uint64_t seed);

}  // namespace loft
