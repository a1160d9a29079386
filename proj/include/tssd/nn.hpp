#pragma once

#include "tssd/nn/batchnorm.hpp"
#include "tssd/nn/conv1d.hpp"
#include "tssd/nn/elementwise.hpp"
#include "tssd/nn/layer_params.hpp"
#include "tssd/nn/linear.hpp"
#include "tssd/nn/pooling.hpp"
#include "tssd/tape.hpp"
#include "tssd/tensor.hpp"
