#pragma once

#include "imputerank/csv.hpp"
#include "imputerank/dataset.hpp"
#include "imputerank/error.hpp"
#include "imputerank/imputers.hpp"
#include "imputerank/metrics.hpp"
#include "imputerank/mrf.hpp"
#include "imputerank/optimize.hpp"
#include "imputerank/parallel.hpp"
#include "imputerank/pipeline.hpp"
#include "imputerank/random.hpp"
#include "imputerank/ranking.hpp"
#include "imputerank/sample_set.hpp"
#include "imputerank/synthetic.hpp"
