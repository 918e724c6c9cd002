# API v1 routes
from cpcssl.api.v1 import runs, verify
