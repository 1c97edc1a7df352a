from .cohort import *
from .experiment import *
from .metric import *
