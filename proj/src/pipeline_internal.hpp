#pragma once

#include <span>

#include "prognos/pipeline.hpp"

namespace prognos::pipeline::detail {

CohortSet load_cohorts(const RunConfig& config);
io::EmbeddingStore load_embeddings_for(const RunConfig& config, const CohortSet& cohorts,
                                       std::span<const std::string> dataset_ids);

}  // namespace prognos::pipeline::detail
