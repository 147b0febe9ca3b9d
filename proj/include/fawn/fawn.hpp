#ifndef FAWN_FAWN_HPP
#define FAWN_FAWN_HPP

#include "fawn/adam.hpp"
#include "fawn/errors.hpp"
#include "fawn/gradcheck.hpp"
#include "fawn/graph.hpp"
#include "fawn/io.hpp"
#include "fawn/model.hpp"
#include "fawn/ops.hpp"
#include "fawn/rng.hpp"
#include "fawn/sample.hpp"
#include "fawn/scene.hpp"
#include "fawn/tensor.hpp"
#include "fawn/train.hpp"

#endif  // FAWN_FAWN_HPP
