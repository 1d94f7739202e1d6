from django.contrib import admin

from .models import RunRecord, Study


class RunRecordInline(admin.TabularInline):
    model = RunRecord
    extra = 0
    fields = ["run_index", "level", "delta_w", "seed", "rho", "status", "spectral_abscissa", "decays"]
    readonly_fields = fields
    can_delete = False


@admin.register(Study)
class StudyAdmin(admin.ModelAdmin):
    list_display = ["id", "name", "kind", "base_seed", "created_at"]
    list_filter = ["kind"]
    search_fields = ["name"]
    inlines = [RunRecordInline]


@admin.register(RunRecord)
class RunRecordAdmin(admin.ModelAdmin):
    list_display = ["study", "run_index", "level", "delta_w", "rho", "status", "spectral_abscissa"]
    list_filter = ["status", "level"]
