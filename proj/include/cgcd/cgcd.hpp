#pragma once

#include "cgcd/checkpoint.hpp"
#include "cgcd/config.hpp"
#include "cgcd/dataset.hpp"
#include "cgcd/emb1.hpp"
#include "cgcd/errors.hpp"
#include "cgcd/evaluation.hpp"
#include "cgcd/matrix.hpp"
#include "cgcd/metric_head.hpp"
#include "cgcd/pipeline.hpp"
#include "cgcd/pseudo_label.hpp"
#include "cgcd/replay_distill.hpp"
#include "cgcd/rng.hpp"
#include "cgcd/splitter.hpp"
#include "cgcd/training.hpp"
