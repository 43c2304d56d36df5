#pragma once

#include "mctree/costmodel.hpp"
#include "mctree/errors.hpp"
#include "mctree/evaluate.hpp"
#include "mctree/loopmodel.hpp"
#include "mctree/process.hpp"
#include "mctree/report.hpp"
#include "mctree/rewrite.hpp"
#include "mctree/search.hpp"
#include "mctree/transforms.hpp"
