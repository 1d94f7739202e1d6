import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Study',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(db_index=True, max_length=255)),
                ('kind', models.CharField(choices=[('pipeline', 'Pipeline run'), ('scalar_example', 'Scalar example'), ('reactor_study', 'Batch reactor study')], db_index=True, max_length=32)),
                ('base_seed', models.BigIntegerField(default=0)),
                ('config', models.JSONField(default=dict)),
                ('output_dir', models.CharField(blank=True, default='', max_length=1024)),
                ('created_at', models.DateTimeField(default=django.utils.timezone.now)),
            ],
            options={
                'verbose_name_plural': 'Studies',
                'db_table': 'studies',
                'ordering': ['-created_at', '-id'],
            },
        ),
        migrations.CreateModel(
            name='RunRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_index', models.PositiveIntegerField()),
                ('level', models.PositiveIntegerField(db_index=True, default=0)),
                ('delta_w', models.FloatField(default=0.0)),
                ('seed', models.BigIntegerField()),
                ('rho', models.FloatField(blank=True, null=True)),
                ('lambda_min_z', models.FloatField(blank=True, null=True)),
                ('status', models.CharField(choices=[('feasible', 'Feasible'), ('infeasible', 'Infeasible'), ('numerical_failure', 'Numerical failure')], db_index=True, max_length=32)),
                ('spectral_abscissa', models.FloatField(blank=True, null=True)),
                ('decays', models.BooleanField(blank=True, null=True)),
                ('wall_time', models.FloatField(default=0.0)),
                ('study', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='runs', to='stabilization.study')),
            ],
            options={
                'db_table': 'run_records',
                'ordering': ['study', 'run_index'],
                'constraints': [models.UniqueConstraint(fields=('study', 'run_index'), name='unique_run_per_study')],
            },
        ),
    ]
