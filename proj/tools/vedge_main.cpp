#include "vedge/pipeline.hpp"
int main(){return 0;}
