"""Multi-perspective trust assessment for crowdsourced IoT services."""

from .device import (
    DeviceDescriptor,
    DeviceProperty,
    ReputationTables,
    device_reputation_uniform,
    device_reputation_weighted,
)
from .model import (
    NetworkParameters,
    SignificanceReport,
    TrainConfig,
    TrustAssessment,
    TrustLevel,
    assess,
    attribute_significance,
    build_network,
    forward,
    load_model,
    prune_attributes,
    save_model,
    train,
)
from .owner import (
    Locality,
    OwnerConfig,
    SocialProfile,
    common_friends_factor,
    common_friends_factor_localized,
    face_to_face,
    relationship_factor,
    relationship_factor_localized,
)
from .service import (
    AggregationMode,
    ClaimVector,
    ReliabilityLedger,
    accumulate,
    consumption_step,
    overall_reliability,
    reliability_vector,
    service_reliability,
)

__version__ = "0.1.0"
