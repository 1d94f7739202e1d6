from django.conf import settings
from rest_framework import serializers

from .exceptions import StabilizationError
from .lmi_synthesis import OBJECTIVES
from .models import RunRecord, Study
from .plant_model import PlantCoefficients, design_filter
from .signals_sim import SIGNAL_KINDS, SignalSpec, time_grid


DEFAULT_NOISE = {
    "delta_w": 0.0,
    "delta_v": 0.0,
    "mode": "sampled",
    "seed": 0,
    "fourier_order": 50,
    "on_sphere": False,
}


def _matrix_field(**kwargs):
    return serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField()), **kwargs
    )


class PlantSerializer(serializers.Serializer):
    """
    Polynomial coefficients of the plant; A, B and E are lists of n
    row-major matrices (A_0 ... A_{n-1}).
    """

    n = serializers.IntegerField(min_value=1)
    m = serializers.IntegerField(min_value=1)
    p = serializers.IntegerField(min_value=1)
    q = serializers.IntegerField(min_value=0, default=0)
    A = serializers.ListField(child=_matrix_field())
    B = serializers.ListField(child=_matrix_field())
    E = serializers.ListField(child=_matrix_field(allow_empty=True), required=False, default=list)

    def validate(self, attrs):
        try:
            PlantCoefficients(
                n=attrs["n"], m=attrs["m"], p=attrs["p"], q=attrs["q"],
                A_coeffs=tuple(attrs["A"]),
                B_coeffs=tuple(attrs["B"]),
                E_coeffs=tuple(attrs["E"]),
            )
        except StabilizationError as e:
            raise serializers.ValidationError(str(e))
        return attrs


class FilterSerializer(serializers.Serializer):
    Lambda = _matrix_field()
    Gamma = serializers.ListField(child=serializers.FloatField())


class SignalSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=SIGNAL_KINDS)
    channels = serializers.IntegerField(min_value=0)
    amplitudes = _matrix_field(required=False)
    frequencies = _matrix_field(required=False)
    phases = _matrix_field(required=False)
    coefficients = _matrix_field(required=False)
    horizon = serializers.FloatField(required=False, min_value=0.0)
    period = serializers.FloatField(required=False, min_value=0.0)

    def validate(self, attrs):
        if attrs["kind"] == "sum_of_sinusoids" and not {"amplitudes", "frequencies"} <= set(attrs):
            raise serializers.ValidationError("sum_of_sinusoids needs amplitudes and frequencies")
        if attrs["kind"] == "fourier_series" and "coefficients" not in attrs:
            raise serializers.ValidationError("fourier_series needs coefficients")
        try:
            SignalSpec.from_dict(attrs)
        except StabilizationError as e:
            raise serializers.ValidationError(str(e))
        return attrs


class NoiseSerializer(serializers.Serializer):
    """
    Energy priors and how the noise realization is obtained. gamma skips
    the gain search; gv_gain overrides the unit bound on G_v.
    """

    delta_w = serializers.FloatField(min_value=0.0, default=0.0)
    delta_v = serializers.FloatField(min_value=0.0, default=0.0)
    mode = serializers.ChoiceField(choices=["sampled", "replay"], default="sampled")
    seed = serializers.IntegerField(min_value=0, default=0)
    fourier_order = serializers.IntegerField(min_value=0, default=50)
    period = serializers.FloatField(required=False, allow_null=True, min_value=0.0)
    on_sphere = serializers.BooleanField(default=False)
    gamma = serializers.FloatField(required=False, allow_null=True, min_value=0.0)
    gv_gain = serializers.FloatField(required=False, allow_null=True, min_value=0.0)
    replay_file = serializers.CharField(required=False, allow_blank=False)

    def validate(self, attrs):
        if attrs.get("mode") == "replay" and not attrs.get("replay_file"):
            raise serializers.ValidationError({"replay_file": "replay mode needs a replay_file"})
        if attrs.get("gamma") == 0.0:
            raise serializers.ValidationError({"gamma": "gamma must be positive"})
        return attrs


class SynthesisSerializer(serializers.Serializer):
    eps = serializers.FloatField(required=False, allow_null=True, min_value=0.0)
    objective = serializers.ChoiceField(choices=OBJECTIVES, default="feasibility")
    decay_rate = serializers.FloatField(required=False, min_value=0.0, default=0.0)
    solver = serializers.CharField(required=False)

    def validate(self, attrs):
        if attrs.get("eps") == 0.0:
            raise serializers.ValidationError({"eps": "eps must be positive"})
        attrs.setdefault("solver", settings.STABILIZATION["SOLVER"])
        return attrs


class MonteCarloSerializer(serializers.Serializer):
    delta_w_levels = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), required=False, allow_null=True, allow_empty=False
    )
    runs_per_level = serializers.IntegerField(min_value=1, default=50)
    base_seed = serializers.IntegerField(min_value=0, default=0)
    workers = serializers.IntegerField(min_value=1, default=1)

    def validate_delta_w_levels(self, value):
        if value is not None and sorted(value) != list(value):
            raise serializers.ValidationError("levels must be listed in increasing order")
        return value


class ExperimentConfigSerializer(serializers.Serializer):
    """
    Validates an experiment configuration document.

    Field-level checks come from the nested serializers; validate() adds
    the cross-field dimension checks and the filter design checks.
    """

    name = serializers.CharField(max_length=255)
    plant = PlantSerializer()
    x0 = serializers.ListField(child=serializers.FloatField(), required=False)
    filter = FilterSerializer()
    horizon = serializers.FloatField(min_value=0.0)
    step = serializers.FloatField(required=False, min_value=0.0)
    input = SignalSerializer()
    noise = NoiseSerializer(required=False)
    synthesis = SynthesisSerializer(required=False)
    monte_carlo = MonteCarloSerializer(required=False, allow_null=True)

    def validate(self, attrs):
        plant = attrs["plant"]
        n, m, p = plant["n"], plant["m"], plant["p"]
        errors = {}

        x0 = attrs.setdefault("x0", [0.0] * (n * p))
        if len(x0) != n * p:
            errors["x0"] = f"x0 must have n*p = {n * p} entries"
        if attrs["input"]["channels"] != m:
            errors["input"] = f"input must have m = {m} channels"

        try:
            design_filter(
                attrs["filter"]["Lambda"], attrs["filter"]["Gamma"], m=m, p=p,
                rtol=settings.STABILIZATION["RANK_RTOL"],
            )
        except StabilizationError as e:
            errors["filter"] = str(e)

        attrs.setdefault("step", settings.STABILIZATION["STEP"])
        try:
            time_grid(attrs["step"], attrs["horizon"])
        except StabilizationError as e:
            errors["step"] = str(e)

        noise = attrs.setdefault("noise", dict(DEFAULT_NOISE))
        if noise.get("delta_v", 0.0) > 0 and p > 1 and noise.get("gv_gain") is None:
            errors["noise"] = "measurement noise with p > 1 needs an explicit gv_gain"
        if noise.get("delta_w", 0.0) > 0 and plant["q"] == 0:
            errors["noise"] = "delta_w > 0 requires a process-noise channel (q > 0)"

        if errors:
            raise serializers.ValidationError(errors)
        attrs.setdefault(
            "synthesis", {"objective": "feasibility", "solver": settings.STABILIZATION["SOLVER"]}
        )
        return attrs


class StudySerializer(serializers.ModelSerializer):
    run_count = serializers.IntegerField(source="runs.count", read_only=True)

    class Meta:
        model = Study
        fields = ["id", "name", "kind", "base_seed", "config", "output_dir", "created_at", "run_count"]
        read_only_fields = fields


class RunRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = RunRecord
        fields = [
            "run_index",
            "level",
            "delta_w",
            "seed",
            "rho",
            "lambda_min_z",
            "status",
            "spectral_abscissa",
            "decays",
            "wall_time",
        ]
        read_only_fields = fields


class RunFilterSerializer(serializers.Serializer):
    """Query parameters of the run listing."""

    status = serializers.ChoiceField(choices=[c[0] for c in RunRecord.STATUS_CHOICES], required=False)
    level = serializers.IntegerField(min_value=0, required=False)
