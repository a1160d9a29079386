#include "tssd/model.hpp"

namespace tssd {

template class Model<float>;
template class Model<double>;

}  // namespace tssd
