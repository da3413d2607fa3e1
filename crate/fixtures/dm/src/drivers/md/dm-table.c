#include "dm.h"

#define KEYS_PER_NODE 8
#define CHILDREN_PER_NODE (KEYS_PER_NODE + 1)

struct dm_table {
	struct mapped_device *md;
	unsigned int depth;
	unsigned int counts[16];
	sector_t *index[16];
	unsigned int num_targets;
	unsigned int num_allocated;
	sector_t *highs;
	struct dm_target *targets;
};

int dm_table_create(struct dm_table **result, fmode_t mode, unsigned int num_targets,
		    struct mapped_device *md)
{
	struct dm_table *t = kzalloc(sizeof(*t), GFP_KERNEL);

	if (!t)
		return -ENOMEM;
	t->num_allocated = num_targets;
	t->md = md;
	*result = t;
	return 0;
}

unsigned int dm_table_get_num_targets(struct dm_table *t)
{
	return t->num_targets;
}

struct dm_target *dm_table_find_target(struct dm_table *t, sector_t sector)
{
	unsigned int i;

	for (i = 0; i < t->num_targets; i++)
		if (t->highs[i] >= sector)
			return t->targets + i;
	return NULL;
}
