#pragma once

#include "dpvm/adam.hpp"
#include "dpvm/checkpoint.hpp"
#include "dpvm/config.hpp"
#include "dpvm/cosine.hpp"
#include "dpvm/data.hpp"
#include "dpvm/dense.hpp"
#include "dpvm/errors.hpp"
#include "dpvm/gradcheck.hpp"
#include "dpvm/gradcheck_suite.hpp"
#include "dpvm/io.hpp"
#include "dpvm/losses.hpp"
#include "dpvm/model.hpp"
#include "dpvm/objective.hpp"
#include "dpvm/retrieval.hpp"
#include "dpvm/synthetic.hpp"
#include "dpvm/trainer.hpp"
