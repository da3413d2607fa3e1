#include <linux/net.h>
#include <linux/socket.h>
#include <linux/rds.h>

struct rds_sock {
	int rs_recverr;
	int rs_cong_monitor;
	__u64 rs_cong_mask;
};

static int rds_set_bool(struct rds_sock *rs, int *optvar, char __user *optval, int optlen)
{
	int value;

	if (optlen < sizeof(int))
		return -EINVAL;
	if (get_user(value, (int __user *) optval))
		return -EFAULT;
	*optvar = !!value;
	return 0;
}

static int rds_free_mr(struct rds_sock *rs, char __user *optval, int optlen)
{
	struct rds_free_mr_args args;

	if (optlen != sizeof(struct rds_free_mr_args))
		return -EINVAL;
	if (copy_from_user(&args, optval, sizeof(struct rds_free_mr_args)))
		return -EFAULT;
	return 0;
}

static int rds_setsockopt(struct socket *sock, int level, int optname,
			  char __user *optval, unsigned int optlen)
{
	struct rds_sock *rs = rds_sk_to_rs(sock->sk);
	int ret;

	if (level != SOL_RDS) {
		ret = -ENOPROTOOPT;
		goto out;
	}

	switch (optname) {
	case RDS_FREE_MR:
		ret = rds_free_mr(rs, optval, optlen);
		break;
	case RDS_RECVERR:
		ret = rds_set_bool(rs, &rs->rs_recverr, optval, optlen);
		break;
	case RDS_CONG_MONITOR:
		ret = rds_set_bool(rs, &rs->rs_cong_monitor, optval, optlen);
		break;
	default:
		ret = -ENOPROTOOPT;
	}
out:
	return ret;
}

static int rds_getsockopt(struct socket *sock, int level, int optname,
			  char __user *optval, int __user *optlen)
{
	struct rds_sock *rs = rds_sk_to_rs(sock->sk);
	int ret = -ENOPROTOOPT, len;

	if (level != SOL_RDS)
		goto out;

	if (get_user(len, optlen)) {
		ret = -EFAULT;
		goto out;
	}

	switch (optname) {
	case RDS_RECVERR:
		if (len < sizeof(int))
			ret = -EINVAL;
		else if (put_user(rs->rs_recverr, (int __user *) optval) ||
			 put_user(sizeof(int), optlen))
			ret = -EFAULT;
		else
			ret = 0;
		break;
	default:
		break;
	}
out:
	return ret;
}

static int rds_release(struct socket *sock)
{
	return 0;
}

static const struct proto_ops rds_proto_ops = {
	.family =	AF_RDS,
	.release =	rds_release,
	.setsockopt =	rds_setsockopt,
	.getsockopt =	rds_getsockopt,
};

static int rds_create(struct net *net, struct socket *sock, int protocol, int kern)
{
	if (sock->type != SOCK_SEQPACKET || protocol)
		return -ESOCKTNOSUPPORT;
	sock->ops = &rds_proto_ops;
	return 0;
}

static const struct net_proto_family rds_family_ops = {
	.family =	AF_RDS,
	.create =	rds_create,
};

static int __init rds_init(void)
{
	return sock_register(&rds_family_ops);
}
