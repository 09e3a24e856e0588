"""
Service reliability from consumer observations
==============================================

A provider A offers a compute service claiming 4 cores and 4 GB of RAM.
Consumer B observes it first; consumer C arrives later and relies on what
B has already seen.
"""

from iottrust.service import (
    AggregationMode,
    ClaimVector,
    ReliabilityLedger,
    consumption_step,
    overall_reliability,
    service_reliability,
)

claims = ClaimVector.of(cores=4, ram_gb=4)
ledger = ReliabilityLedger("A")

# nobody has consumed the service yet: the default applies
print("before any observation:", service_reliability(ledger))

# B receives only 2 cores at first, then 4 cores but 3 GB
ledger = consumption_step(ledger, "B", claims, [2, 4], t=1800, gamma=0.5)
print("B after first check:   ", ledger["B"].accumulated)
ledger = consumption_step(ledger, "B", claims, [4, 3], t=3600, gamma=0.5)
print("B after second check:  ", ledger["B"].accumulated)

# C asks current consumers before starting
print("reliability seen by C: ", service_reliability(ledger))

# C joins halfway and gets 3 cores with all the RAM
ledger = consumption_step(ledger, "C", claims, [3, 4], t=3600, gamma=0.5, since=1800)

# dividing by the longest stay lets the total pass 1, hence the clamp
for mode in AggregationMode:
    print(f"{mode.value:>20}:", overall_reliability(ledger, mode))
