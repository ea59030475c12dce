#pragma once

#include "tripletlab/adagrad.hpp"
#include "tripletlab/checkpoint.hpp"
#include "tripletlab/config.hpp"
#include "tripletlab/core.hpp"
#include "tripletlab/dataset.hpp"
#include "tripletlab/embedder.hpp"
#include "tripletlab/eval.hpp"
#include "tripletlab/experiment.hpp"
#include "tripletlab/loss.hpp"
#include "tripletlab/mining.hpp"
#include "tripletlab/pool.hpp"
#include "tripletlab/random.hpp"
#include "tripletlab/sampler.hpp"
#include "tripletlab/trainer.hpp"
