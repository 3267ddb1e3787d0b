import math

from django.core.exceptions import ValidationError as DomainValidationError
from rest_framework import serializers

from .conf import get_setting
from .exceptions import FluxlabError
from .models import DickeParams, KerrParams

MODELS = ("kerr", "cavity", "dicke")

KERR_COLUMNS = (
    "model", "N", "eps", "S", "Phi_ext", "Phi_q", "Pi_ext", "Pi_u", "Pi_d", "gap",
    "alpha_re", "alpha_im", "residual", "n_max_used", "wall_time_s",
)
DICKE_COLUMNS = (
    "model", "N", "lambda", "S", "Phi_ext", "Phi_q", "Pi_ext", "Pi_u", "Pi_d",
    "alpha_re", "alpha_im", "beta", "residual", "n_max_used", "wall_time_s",
    "Pi_d_b", "Phi_q_b",
)

# Cavity runs are a Kerr cavity with a vanishing nonlinearity.
CAVITY_U = 1e-12


def columns_for(model):
    return DICKE_COLUMNS if model == "dicke" else KERR_COLUMNS


class StrictFieldsMixin:
    """Reject keys that no declared field consumes."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ["Unknown field."] for key in unknown})
        return super().to_internal_value(data)


class FiniteFloatField(serializers.FloatField):
    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        if not math.isfinite(value):
            raise serializers.ValidationError("Must be a finite number.")
        return value


class KerrParamsSerializer(StrictFieldsMixin, serializers.Serializer):
    delta = FiniteFloatField()
    u = FiniteFloatField()
    kappa = FiniteFloatField()


class CavityParamsSerializer(StrictFieldsMixin, serializers.Serializer):
    E = FiniteFloatField(min_value=0)
    kappa = FiniteFloatField()


class DickeParamsSerializer(StrictFieldsMixin, serializers.Serializer):
    omega0 = FiniteFloatField()
    omega = FiniteFloatField()
    kappa = FiniteFloatField()
    gamma = FiniteFloatField(required=False, default=1e-3)


class GridRangeSerializer(StrictFieldsMixin, serializers.Serializer):
    """Either explicit ``values`` or ``min``/``max``/``count`` (inclusive, evenly spaced)."""

    values = serializers.ListField(child=FiniteFloatField(), required=False, allow_empty=False)
    min = FiniteFloatField(required=False)
    max = FiniteFloatField(required=False)
    count = serializers.IntegerField(required=False, min_value=1)
    relative = serializers.BooleanField(required=False, default=False)

    def validate(self, attrs):
        ranged = [key for key in ("min", "max", "count") if key in attrs]
        if "values" in attrs:
            if ranged:
                raise serializers.ValidationError("Give either values or min/max/count, not both.")
            return attrs
        if len(ranged) != 3:
            raise serializers.ValidationError("A range needs min, max and count.")
        if attrs["count"] > 1 and attrs["max"] <= attrs["min"]:
            raise serializers.ValidationError("max must exceed min.")
        return attrs


class SweepSerializer(StrictFieldsMixin, serializers.Serializer):
    N_list = serializers.ListField(
        child=serializers.IntegerField(min_value=1), required=False, allow_empty=False
    )
    N = serializers.IntegerField(required=False, min_value=1, default=1)
    eps_grid = GridRangeSerializer(required=False)
    lambda_grid = GridRangeSerializer(required=False)


class NumericsSerializer(StrictFieldsMixin, serializers.Serializer):
    n_max = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=2)
    points_per_axis = serializers.IntegerField(required=False, allow_null=True, default=None)
    balance_tol = FiniteFloatField(required=False, allow_null=True, default=None, min_value=0)
    mc_samples = serializers.IntegerField(required=False, default=0, min_value=0)
    seed = serializers.IntegerField(required=False, default=0, min_value=0)
    record_wall_time = serializers.BooleanField(required=False, default=False)

    def validate_points_per_axis(self, value):
        minimum = get_setting("PHASE_SPACE", "MIN_POINTS_PER_AXIS")
        if value is not None and value < minimum:
            raise serializers.ValidationError(f"Ensure this value is at least {minimum}.")
        return value


NUMERICS_DEFAULTS = {
    "n_max": None,
    "points_per_axis": None,
    "balance_tol": None,
    "mc_samples": 0,
    "seed": 0,
    "record_wall_time": False,
}

PARAMS_SERIALIZERS = {
    "kerr": KerrParamsSerializer,
    "cavity": CavityParamsSerializer,
    "dicke": DickeParamsSerializer,
}


def expand_grid(block, scale=1.0):
    if "values" in block:
        values = list(block["values"])
    elif block["count"] == 1:
        values = [block["min"]]
    else:
        step = (block["max"] - block["min"]) / (block["count"] - 1)
        values = [block["min"] + i * step for i in range(block["count"])]
    factor = scale if block.get("relative") else 1.0
    return [factor * value for value in values]


class RunConfigSerializer(StrictFieldsMixin, serializers.Serializer):
    """Validates a run configuration and attaches the domain parameter object.

    ``validated_data["params"]`` is a ``KerrParams`` (kerr, cavity) or a
    ``DickeParams`` with ``lam = 0``.
    """

    schema_version = serializers.IntegerField(required=False, default=1)
    model = serializers.ChoiceField(choices=MODELS)
    params = serializers.DictField()
    sweep = SweepSerializer(required=False, default=dict)
    numerics = NumericsSerializer(required=False, default=dict)
    output = serializers.CharField()

    def validate_schema_version(self, value):
        expected = get_setting("RUN", "SCHEMA_VERSION")
        if value != expected:
            raise serializers.ValidationError(f"Unsupported schema version {value}; expected {expected}.")
        return value

    def validate(self, attrs):
        model = attrs["model"]
        block = PARAMS_SERIALIZERS[model](data=attrs["params"])
        if not block.is_valid():
            raise serializers.ValidationError({"params": block.errors})
        params = block.validated_data
        sweep_data = {"N": 1, **attrs["sweep"]}
        numerics = {**NUMERICS_DEFAULTS, **attrs["numerics"]}

        try:
            if model == "dicke":
                attrs["params"] = DickeParams(
                    omega0=params["omega0"], omega=params["omega"], kappa=params["kappa"],
                    gamma=params["gamma"],
                )
            elif model == "cavity":
                attrs["params"] = KerrParams(delta=0.0, u=CAVITY_U, kappa=params["kappa"], eps=params["E"])
            else:
                attrs["params"] = KerrParams(delta=params["delta"], u=params["u"], kappa=params["kappa"])
        except (DomainValidationError, FluxlabError) as exc:
            messages = exc.messages if isinstance(exc, DomainValidationError) else [str(exc)]
            raise serializers.ValidationError({"params": messages}) from exc

        if model == "dicke":
            if "lambda_grid" not in sweep_data:
                raise serializers.ValidationError({"sweep": {"lambda_grid": ["This field is required."]}})
            if "eps_grid" in sweep_data or "N_list" in sweep_data:
                raise serializers.ValidationError({"sweep": ["Dicke runs take lambda_grid and N only."]})
        else:
            if "lambda_grid" in sweep_data:
                raise serializers.ValidationError({"sweep": ["lambda_grid only applies to dicke runs."]})
            if model == "kerr" and "eps_grid" not in sweep_data:
                raise serializers.ValidationError({"sweep": {"eps_grid": ["This field is required."]}})
            if model == "cavity" and "N_list" in sweep_data:
                raise serializers.ValidationError({"sweep": ["Cavity runs always use N = 1."]})
        for name in ("eps_grid", "lambda_grid"):
            grid = sweep_data.get(name)
            if grid is not None and any(value < 0 for value in expand_grid(grid)):
                raise serializers.ValidationError({"sweep": {name: ["Values must be non-negative."]}})
        attrs["sweep"] = sweep_data
        attrs["numerics"] = numerics
        return attrs


class ResultRowSerializer(serializers.Serializer):
    """Flattens a SweepRecord (kerr, cavity) into one CSV row in schema order."""

    model = serializers.SerializerMethodField()
    N = serializers.IntegerField()
    eps = serializers.FloatField()
    S = serializers.FloatField(source="budget.S")
    Phi_ext = serializers.FloatField(source="budget.Phi_ext")
    Phi_q = serializers.FloatField(source="budget.Phi_q")
    Pi_ext = serializers.FloatField(source="budget.Pi_ext")
    Pi_u = serializers.FloatField(source="budget.Pi_u")
    Pi_d = serializers.FloatField(source="budget.Pi_d")
    gap = serializers.FloatField()
    alpha_re = serializers.FloatField(source="budget.alpha.real")
    alpha_im = serializers.FloatField(source="budget.alpha.imag")
    residual = serializers.FloatField()
    n_max_used = serializers.IntegerField()
    wall_time_s = serializers.SerializerMethodField()

    columns = KERR_COLUMNS

    def get_fields(self):
        fields = super().get_fields()
        return {name: fields[name] for name in self.columns}

    def get_model(self, obj):
        return self.context.get("model", "kerr")

    def get_wall_time_s(self, obj):
        return float(obj.wall_time_s) if self.context.get("record_wall_time") else 0.0

    def to_representation(self, instance):
        data = super().to_representation(instance)
        for name, value in data.items():
            if isinstance(value, float) and not math.isfinite(value):
                raise serializers.ValidationError({name: [f"Non-finite value {value!r}."]})
        return data


class DickeRowSerializer(ResultRowSerializer):
    """Flattens a DickeScanPoint; the control column is ``lambda``."""

    N = serializers.SerializerMethodField()
    beta = serializers.FloatField(source="mean_field.beta.real")
    residual = serializers.FloatField(source="covariance.residual")
    n_max_used = serializers.SerializerMethodField()
    Pi_d_b = serializers.FloatField(source="budget.Pi_d_b")
    Phi_q_b = serializers.FloatField(source="budget.Phi_q_b")

    columns = DICKE_COLUMNS

    def get_fields(self):
        fields = serializers.Serializer.get_fields(self)
        fields["lambda"] = serializers.FloatField(source="lam")
        return {name: fields[name] for name in self.columns}

    def get_model(self, obj):
        return "dicke"

    def get_N(self, obj):
        return int(self.context.get("N", 1))

    def get_n_max_used(self, obj):
        return 0

