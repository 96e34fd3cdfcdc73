#pragma once

#include "aaseg/tensor.hpp"
#include "aaseg/rng.hpp"
#include "aaseg/taxonomy.hpp"
#include "aaseg/types.hpp"
#include "aaseg/fusion.hpp"
#include "aaseg/regionhead.hpp"
#include "aaseg/frontend.hpp"
#include "aaseg/model.hpp"
#include "aaseg/training.hpp"
#include "aaseg/gradcheck.hpp"
#include "aaseg/metrics.hpp"
#include "aaseg/synthdata.hpp"
#include "aaseg/dataset_io.hpp"
#include "aaseg/experiment.hpp"
#include "aaseg/parallel.hpp"
