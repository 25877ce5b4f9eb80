#pragma once

#include "ranrec/anomaly.hpp"
#include "ranrec/config.hpp"
#include "ranrec/error.hpp"
#include "ranrec/evaluation.hpp"
#include "ranrec/gnn.hpp"
#include "ranrec/grad_check.hpp"
#include "ranrec/graph.hpp"
#include "ranrec/inference.hpp"
#include "ranrec/io.hpp"
#include "ranrec/matrix.hpp"
#include "ranrec/model.hpp"
#include "ranrec/pipeline.hpp"
#include "ranrec/rng.hpp"
#include "ranrec/sampler.hpp"
#include "ranrec/synth.hpp"
#include "ranrec/tape.hpp"
#include "ranrec/training.hpp"
