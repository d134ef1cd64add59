#pragma once

#include "checkpoint.hpp"
#include "config.hpp"
#include "conv.hpp"
#include "dihedral.hpp"
#include "error.hpp"
#include "image.hpp"
#include "infer.hpp"
#include "metrics.hpp"
#include "network.hpp"
#include "parallel.hpp"
#include "tensor.hpp"
#include "train.hpp"
