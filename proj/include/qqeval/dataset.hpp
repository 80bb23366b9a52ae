#pragma once

#include <string>
#include <vector>

#include "qqeval/types.hpp"

namespace qqeval {

// Pair files are line-delimited JSON: one object per line with fields
// "id" (optional), "context", "question", and optional "subject".
// Missing ids are synthesized as "<dataset_tag>-<row>" with the 1-based row
// number zero-padded to six digits, so reruns join deterministically.
std::vector<QuestionRecord> load_pairs(const std::string& path, const std::string& dataset_tag);

// Writes records back out in the same line-delimited format, ids included.
// Loading the result yields an identical record list.
void save_pairs(const std::vector<QuestionRecord>& records, const std::string& path);

// Ratings files are CSV with the exact header
//   question_id,rater_id,gram,app,rel,nov,com
// Scores must be integers within `scale`; one row per (question_id, rater_id).
std::vector<HumanRating> load_human_ratings(const std::string& path,
                                            ScaleBounds scale = ScaleBounds{});

void save_human_ratings(const std::vector<HumanRating>& ratings, const std::string& path);

}  // namespace qqeval
