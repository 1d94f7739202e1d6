from django.db.models import Max
from drf_spectacular.types import OpenApiTypes
from drf_spectacular.utils import OpenApiExample, OpenApiParameter, extend_schema
from rest_framework import status
from rest_framework.decorators import api_view
from rest_framework.response import Response

from .models import RunRecord, Study
from .serializers import RunFilterSerializer, RunRecordSerializer, StudySerializer
from .services import ExperimentService


STUDY_ID_PARAMETER = OpenApiParameter(
    name="study_id",
    type=OpenApiTypes.INT,
    location=OpenApiParameter.PATH,
    description="Study identifier",
    required=True,
)


@extend_schema(
    summary="API Home - Project Information",
    description="Returns API information, stored study counts and links to the interactive documentation.",
    responses={
        200: {
            "type": "object",
            "properties": {
                "project": {"type": "string"},
                "description": {"type": "string"},
                "version": {"type": "string"},
                "statistics": {"type": "object"},
                "documentation": {"type": "object"},
                "endpoints": {"type": "object"},
            },
        }
    },
    tags=["General"],
)
@api_view(["GET"])
def home(request):
    """GET / - API home with project information and documentation links"""
    base_url = request.build_absolute_uri("/")[:-1]

    return Response(
        {
            "project": "Data-Driven Stabilization",
            "description": "Stabilizing output-feedback controllers synthesized from noisy input/output data",
            "version": "1.0.0",
            "statistics": {
                "total_studies": Study.objects.count(),
                "total_runs": RunRecord.objects.count(),
            },
            "documentation": {
                "swagger_ui": f"{base_url}/docs",
                "redoc": f"{base_url}/redoc",
                "openapi_schema": f"{base_url}/schema",
            },
            "endpoints": {
                "list_studies": f"{base_url}/studies/",
                "get_study": f"{base_url}/studies/{{id}}",
                "study_runs": f"{base_url}/studies/{{id}}/runs",
                "status": f"{base_url}/status",
            },
        },
        status=status.HTTP_200_OK,
    )


@extend_schema(
    summary="Get API Status",
    description="Returns the number of stored studies and runs and the time of the latest study.",
    responses={
        200: {
            "type": "object",
            "properties": {
                "total_studies": {"type": "integer"},
                "total_runs": {"type": "integer"},
                "last_study_at": {"type": "string", "format": "date-time", "nullable": True},
            },
        }
    },
    examples=[
        OpenApiExample(
            "Status Response",
            value={"total_studies": 3, "total_runs": 502, "last_study_at": "2026-01-28T16:00:00Z"},
            response_only=True,
        )
    ],
    tags=["General"],
)
@api_view(["GET"])
def get_status(request):
    """GET /status"""
    return Response(
        {
            "total_studies": Study.objects.count(),
            "total_runs": RunRecord.objects.count(),
            "last_study_at": Study.objects.aggregate(latest=Max("created_at"))["latest"],
        },
        status=status.HTTP_200_OK,
    )


@extend_schema(
    summary="List Studies",
    description="Returns stored studies, newest first, optionally filtered by kind.",
    parameters=[
        OpenApiParameter(
            name="kind",
            type=OpenApiTypes.STR,
            location=OpenApiParameter.QUERY,
            description="Filter by study kind",
            required=False,
            enum=[choice[0] for choice in Study.KIND_CHOICES],
        ),
    ],
    responses={
        200: StudySerializer(many=True),
        400: {"description": "Invalid query parameters"},
    },
    tags=["Studies"],
)
@api_view(["GET"])
def list_studies(request):
    """GET /studies/ with an optional kind filter"""
    kind = request.query_params.get("kind")
    queryset = Study.objects.all()
    if kind is not None:
        if kind not in dict(Study.KIND_CHOICES):
            return Response(
                {"error": "Invalid query parameters", "details": {"kind": f'"{kind}" is not a valid choice.'}},
                status=status.HTTP_400_BAD_REQUEST,
            )
        queryset = queryset.filter(kind=kind)

    serializer = StudySerializer(queryset, many=True)
    return Response(serializer.data, status=status.HTTP_200_OK)


@extend_schema(
    summary="Get Study",
    description="Study details with per-level rho quartiles and feasibility percentages recomputed from the stored runs.",
    parameters=[STUDY_ID_PARAMETER],
    responses={200: StudySerializer, 404: {"description": "Study not found"}},
    examples=[
        OpenApiExample(
            "Study Summary",
            value={
                "id": 1,
                "name": "batch_reactor",
                "kind": "reactor_study",
                "base_seed": 0,
                "run_count": 250,
                "summary": [
                    {
                        "level": 0,
                        "delta_w": 0.0,
                        "rho_q1": 1.2e-9,
                        "rho_median": 1.9e-9,
                        "rho_q3": 2.7e-9,
                        "feasible_pct": 100.0,
                        "failure_pct": 0.0,
                    }
                ],
            },
            response_only=True,
        )
    ],
    tags=["Studies"],
)
@api_view(["GET"])
def study_detail(request, study_id):
    """GET /studies/:id"""
    try:
        study = Study.objects.get(pk=study_id)
    except Study.DoesNotExist:
        return Response({"error": "Study not found"}, status=status.HTTP_404_NOT_FOUND)

    data = StudySerializer(study).data
    data["summary"] = ExperimentService.study_summary(study)
    return Response(data, status=status.HTTP_200_OK)


@extend_schema(
    summary="List Study Runs",
    description="Returns the runs of a study, optionally filtered by synthesis status or noise level index.",
    parameters=[
        STUDY_ID_PARAMETER,
        OpenApiParameter(
            name="status",
            type=OpenApiTypes.STR,
            location=OpenApiParameter.QUERY,
            description="Filter by synthesis status",
            required=False,
            enum=[choice[0] for choice in RunRecord.STATUS_CHOICES],
        ),
        OpenApiParameter(
            name="level",
            type=OpenApiTypes.INT,
            location=OpenApiParameter.QUERY,
            description="Filter by noise level index",
            required=False,
        ),
    ],
    responses={
        200: RunRecordSerializer(many=True),
        400: {"description": "Invalid query parameters"},
        404: {"description": "Study not found"},
    },
    examples=[
        OpenApiExample("Infeasible runs", value="?status=infeasible", parameter_only=("status",)),
    ],
    tags=["Studies"],
)
@api_view(["GET"])
def study_runs(request, study_id):
    """GET /studies/:id/runs with status and level filters"""
    try:
        study = Study.objects.get(pk=study_id)
    except Study.DoesNotExist:
        return Response({"error": "Study not found"}, status=status.HTTP_404_NOT_FOUND)

    filter_serializer = RunFilterSerializer(data=request.query_params)
    if not filter_serializer.is_valid():
        return Response(
            {"error": "Invalid query parameters", "details": filter_serializer.errors},
            status=status.HTTP_400_BAD_REQUEST,
        )

    queryset = study.runs.all()
    validated_data = filter_serializer.validated_data
    if "status" in validated_data:
        queryset = queryset.filter(status=validated_data["status"])
    if "level" in validated_data:
        queryset = queryset.filter(level=validated_data["level"])

    serializer = RunRecordSerializer(queryset, many=True)
    return Response(serializer.data, status=status.HTTP_200_OK)
