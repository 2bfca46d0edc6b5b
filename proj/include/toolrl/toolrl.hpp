#pragma once

#include "toolrl/bench.hpp"
#include "toolrl/default_env.hpp"
#include "toolrl/demo.hpp"
#include "toolrl/digest.hpp"
#include "toolrl/diversity.hpp"
#include "toolrl/env.hpp"
#include "toolrl/error.hpp"
#include "toolrl/io.hpp"
#include "toolrl/mar.hpp"
#include "toolrl/policy.hpp"
#include "toolrl/pool.hpp"
#include "toolrl/rng.hpp"
#include "toolrl/trainer.hpp"
