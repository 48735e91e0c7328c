#pragma once

#include "fracbnn/bitpack.hpp"
#include "fracbnn/encoding.hpp"
#include "fracbnn/fixed.hpp"
#include "fracbnn/image.hpp"
#include "fracbnn/io.hpp"
#include "fracbnn/kernels.hpp"
#include "fracbnn/model.hpp"
#include "fracbnn/modelfile.hpp"
#include "fracbnn/network.hpp"
#include "fracbnn/parallel.hpp"
#include "fracbnn/synthetic.hpp"
#include "fracbnn/tensor.hpp"
