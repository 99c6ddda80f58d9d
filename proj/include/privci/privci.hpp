#pragma once

#include "privci/benchmark.hpp"
#include "privci/config.hpp"
#include "privci/data.hpp"
#include "privci/dp.hpp"
#include "privci/error.hpp"
#include "privci/eval.hpp"
#include "privci/marginals.hpp"
#include "privci/model.hpp"
#include "privci/pipeline.hpp"
#include "privci/rng.hpp"
#include "privci/structure.hpp"
