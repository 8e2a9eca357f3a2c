from zoegd.utils.workers import worker_count
from zoegd.utils.output import write_results
