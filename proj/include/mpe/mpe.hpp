#pragma once

#include "mpe/core.hpp"
#include "mpe/trip_ingest.hpp"
#include "mpe/event_catalog.hpp"
#include "mpe/decomposition.hpp"
#include "mpe/llm_gateway.hpp"
#include "mpe/llm_http.hpp"
#include "mpe/prompt_builder.hpp"
#include "mpe/response_parser.hpp"
#include "mpe/baseline_models.hpp"
#include "mpe/evaluation.hpp"
#include "mpe/heuristic_backend.hpp"
#include "mpe/synthetic.hpp"
#include "mpe/pipeline.hpp"
